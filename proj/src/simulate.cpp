#include "timbre/simulate.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>

#include "timbre/errors.hpp"
#include "timbre/rng.hpp"

namespace timbre::simulate {

void validate(const SimulatedRaterSpec& spec) {
    if (spec.participants < 1) {
        throw ConfigError("simulated raters: need at least one participant");
    }
    if (!(spec.sigma >= 0.0) || !std::isfinite(spec.sigma)) {
        throw ConfigError("simulated raters: sigma must be finite and >= 0");
    }
    if (!(spec.max_rating > 0.0) || spec.max_rating > ratings::kMaxRating) {
        throw ConfigError("simulated raters: max_rating must be in (0, 9]");
    }
}

Matrix planted_coordinates(std::size_t n, std::size_t dims, std::uint64_t seed) {
    Rng rng(seed);
    Matrix x(n, dims);
    for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t c = 0; c < dims; ++c) {
            x(i, c) = rng.normal();
        }
    }
    return x;
}

Matrix descriptor_space(const stats::FeatureColumns& columns) {
    if (columns.empty()) {
        throw ConfigError("descriptor space: no columns");
    }
    const std::size_t n = columns.front().values.size();
    Matrix x(n, columns.size());
    for (std::size_t c = 0; c < columns.size(); ++c) {
        const auto& v = columns[c].values;
        if (v.size() != n) {
            throw ConfigError("descriptor space: ragged columns");
        }
        double mean = 0.0;
        for (double a : v) {
            mean += a;
        }
        mean /= static_cast<double>(n);
        double var = 0.0;
        for (double a : v) {
            var += (a - mean) * (a - mean);
        }
        const double sd = std::sqrt(var / static_cast<double>(n));
        for (std::size_t i = 0; i < n; ++i) {
            x(i, c) = sd > 0.0 ? (v[i] - mean) / sd : 0.0;
        }
    }
    return x;
}

double quantize_rating(double x) {
    return std::clamp(std::round(2.0 * x) / 2.0, 0.0, ratings::kMaxRating);
}

namespace {

double distance(const Matrix& x, std::size_t i, std::size_t j) {
    double s = 0.0;
    for (std::size_t c = 0; c < x.cols(); ++c) {
        const double d = x(i, c) - x(j, c);
        s += d * d;
    }
    return std::sqrt(s);
}

}  // namespace

std::vector<ratings::RatingRecord> simulate_ratings(const SimulatedRaterSpec& spec,
                                                    const std::vector<std::string>& ids,
                                                    const Matrix& latent, std::uint64_t seed) {
    validate(spec);
    const std::size_t n = ids.size();
    if (latent.rows() != n) {
        throw ConfigError("simulated raters: latent rows do not match stimulus count");
    }
    double dmax = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t j = i + 1; j < n; ++j) {
            dmax = std::max(dmax, distance(latent, i, j));
        }
    }
    if (dmax <= 0.0) {
        throw ConfigError("simulated raters: latent configuration is degenerate");
    }
    const double scale = spec.max_rating / dmax;

    std::vector<ratings::RatingRecord> out;
    out.reserve(spec.participants * ratings::trial_count(n));
    for (std::size_t p = 0; p < spec.participants; ++p) {
        const std::uint64_t pseed = Rng::derive(seed, p);
        const auto schedule = ratings::pair_schedule(n, pseed);
        Rng noise(Rng::derive(pseed, 1));
        char name[32];
        std::snprintf(name, sizeof name, "sim-%03zu", p + 1);
        for (std::size_t t = 0; t < schedule.size(); ++t) {
            const auto& trial = schedule[t];
            const double e = spec.sigma * noise.normal();
            const double raw = trial.identical() ? std::max(0.0, e)
                                                 : scale * distance(latent, trial.a, trial.b) + e;
            ratings::RatingRecord r;
            r.participant_id = name;
            r.session_id = name;
            r.trial_index = t;
            r.stim_a = ids[trial.a];
            r.stim_b = ids[trial.b];
            r.rating = quantize_rating(raw);
            r.submitted_at = "2000-01-01T00:00:00Z";
            out.push_back(std::move(r));
        }
    }
    return out;
}

}  // namespace timbre::simulate
