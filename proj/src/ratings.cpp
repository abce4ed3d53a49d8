#include "timbre/ratings.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <set>
#include <sstream>

#include "timbre/errors.hpp"
#include "timbre/io.hpp"
#include "timbre/rng.hpp"

namespace timbre::ratings {

using nlohmann::json;

std::vector<Trial> pair_schedule(std::size_t n, std::uint64_t seed) {
    if (n < 2) {
        throw ConfigError("pair_schedule: need at least two stimuli");
    }
    Rng rng(seed);
    std::vector<Trial> trials;
    trials.reserve(trial_count(n));
    for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t j = i + 1; j < n; ++j) {
            trials.push_back(rng.coin() ? Trial{j, i} : Trial{i, j});
        }
    }
    for (std::size_t i = 0; i < n; ++i) {
        trials.push_back({i, i});
    }
    rng.shuffle(trials);
    return trials;
}

bool on_rating_grid(double rating) {
    if (!(rating >= 0.0 && rating <= kMaxRating)) {
        return false;
    }
    const double twice = 2.0 * rating;
    return twice == std::floor(twice);
}

json to_json(const RatingRecord& r) {
    return {{"participant_id", r.participant_id},
            {"session_id", r.session_id},
            {"trial_index", r.trial_index},
            {"stim_a", r.stim_a},
            {"stim_b", r.stim_b},
            {"rating", r.rating},
            {"replay_count_a", r.replay_count_a},
            {"replay_count_b", r.replay_count_b},
            {"submitted_at", r.submitted_at},
            {"excluded_flag", r.excluded_flag ? json(*r.excluded_flag) : json(nullptr)}};
}

RatingRecord record_from_json(const json& j) {
    RatingRecord r;
    try {
        r.participant_id = j.at("participant_id").get<std::string>();
        r.session_id = j.at("session_id").get<std::string>();
        r.trial_index = j.at("trial_index").get<std::size_t>();
        r.stim_a = j.at("stim_a").get<std::string>();
        r.stim_b = j.at("stim_b").get<std::string>();
        r.rating = j.at("rating").get<double>();
        r.replay_count_a = j.value("replay_count_a", 0);
        r.replay_count_b = j.value("replay_count_b", 0);
        r.submitted_at = j.value("submitted_at", std::string{});
        if (j.contains("excluded_flag") && !j.at("excluded_flag").is_null()) {
            r.excluded_flag = j.at("excluded_flag").get<std::string>();
        }
    } catch (const json::exception& e) {
        throw ParseError(std::string("rating record: ") + e.what(), 0);
    }
    if (!on_rating_grid(r.rating)) {
        throw ParseError("rating record: rating off the 0..9 half-step grid", 0);
    }
    return r;
}

std::vector<RatingRecord> parse_jsonl(std::string_view text) {
    std::vector<RatingRecord> out;
    std::size_t line_no = 0;
    std::size_t pos = 0;
    while (pos < text.size()) {
        auto nl = text.find('\n', pos);
        if (nl == std::string_view::npos) {
            nl = text.size();
        }
        const auto line = text.substr(pos, nl - pos);
        pos = nl + 1;
        if (line.find_first_not_of(" \t\r") != std::string_view::npos) {
            try {
                out.push_back(record_from_json(json::parse(line)));
            } catch (const json::parse_error& e) {
                throw ParseError(std::string("jsonl: ") + e.what(), line_no);
            } catch (const ParseError& e) {
                throw ParseError(e.what(), line_no);
            }
        }
        ++line_no;
    }
    return out;
}

std::vector<RatingRecord> read_jsonl(const std::filesystem::path& path) {
    return parse_jsonl(io::read_text(path));
}

std::string to_jsonl(std::span<const RatingRecord> records) {
    std::string out;
    for (const auto& r : records) {
        out += to_json(r).dump();
        out += '\n';
    }
    return out;
}

std::string to_string(ExclusionReason reason) {
    switch (reason) {
        case ExclusionReason::none: return "included";
        case ExclusionReason::incomplete: return "incomplete";
        case ExclusionReason::control: return "control";
        case ExclusionReason::flagged: return "flagged";
    }
    return "unknown";
}

Exclusion exclusion_check(std::span<const RatingRecord> records, std::size_t n,
                          const ExclusionPolicy& policy) {
    for (const auto& r : records) {
        if (r.excluded_flag) {
            return {ExclusionReason::flagged, *r.excluded_flag};
        }
    }
    std::set<std::size_t> indices;
    for (const auto& r : records) {
        indices.insert(r.trial_index);
    }
    const std::size_t expected = trial_count(n);
    const bool complete = indices.size() == expected && records.size() == expected &&
                          *indices.rbegin() == expected - 1;
    if (!complete) {
        return {ExclusionReason::incomplete,
                std::to_string(indices.size()) + " of " + std::to_string(expected) + " trials"};
    }
    int violations = 0;
    for (const auto& r : records) {
        if (r.stim_a == r.stim_b && r.rating >= policy.control_rating) {
            ++violations;
        }
    }
    if (violations > policy.max_control_violations) {
        return {ExclusionReason::control,
                std::to_string(violations) + " identical pairs rated >= " +
                    io::format_double(policy.control_rating)};
    }
    return {};
}

std::vector<double> DissimilarityMatrix::upper_triangle() const {
    const std::size_t n = size();
    std::vector<double> out;
    out.reserve(n * (n - 1) / 2);
    for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t j = i + 1; j < n; ++j) {
            out.push_back(values(i, j));
        }
    }
    return out;
}

void validate(const DissimilarityMatrix& m) {
    const std::size_t n = m.size();
    if (m.values.rows() != n || m.values.cols() != n) {
        throw ConfigError("dissimilarity matrix: shape does not match the id list");
    }
    for (std::size_t i = 0; i < n; ++i) {
        if (m.values(i, i) != 0.0) {
            throw ConfigError("dissimilarity matrix: nonzero diagonal at " + m.ids[i]);
        }
        for (std::size_t j = 0; j < n; ++j) {
            const double v = m.values(i, j);
            if (!(v >= 0.0) || !std::isfinite(v)) {
                throw ConfigError("dissimilarity matrix: negative or non-finite entry");
            }
            if (v != m.values(j, i)) {
                throw ConfigError("dissimilarity matrix: not symmetric at (" + m.ids[i] + ", " +
                                  m.ids[j] + ")");
            }
        }
    }
}

DissimilarityMatrix mean_matrix(std::span<const RatingRecord> records,
                                const std::vector<std::string>& ids) {
    const std::size_t n = ids.size();
    std::map<std::string, std::size_t> index;
    for (std::size_t i = 0; i < n; ++i) {
        if (!index.emplace(ids[i], i).second) {
            throw ConfigError("mean_matrix: duplicate stimulus id '" + ids[i] + "'");
        }
    }
    Matrix sum(n, n);
    Matrix count(n, n);
    for (const auto& r : records) {
        const auto a = index.find(r.stim_a);
        const auto b = index.find(r.stim_b);
        if (a == index.end() || b == index.end()) {
            throw ConfigError("mean_matrix: unknown stimulus in record (" + r.stim_a + ", " +
                              r.stim_b + ")");
        }
        if (a->second == b->second) {
            continue;
        }
        const auto i = std::min(a->second, b->second);
        const auto j = std::max(a->second, b->second);
        sum(i, j) += r.rating;
        count(i, j) += 1.0;
    }
    DissimilarityMatrix m{ids, Matrix(n, n)};
    for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t j = i + 1; j < n; ++j) {
            if (count(i, j) == 0.0) {
                throw ConfigError("mean_matrix: no ratings for pair (" + ids[i] + ", " + ids[j] + ")");
            }
            const double mean = sum(i, j) / count(i, j);
            m.values(i, j) = mean;
            m.values(j, i) = mean;
        }
    }
    return m;
}

Aggregate aggregate(std::span<const RatingRecord> records, const std::vector<std::string>& ids,
                    const ExclusionPolicy& policy) {
    std::map<std::string, std::vector<RatingRecord>> by_participant;
    for (const auto& r : records) {
        by_participant[r.participant_id].push_back(r);
    }
    Aggregate out;
    std::vector<RatingRecord> included;
    for (const auto& [pid, recs] : by_participant) {
        Exclusion ex = exclusion_check(recs, ids.size(), policy);
        if (ex.included()) {
            included.insert(included.end(), recs.begin(), recs.end());
            ++out.included;
        }
        out.participants.push_back({pid, std::move(ex)});
    }
    if (out.included == 0) {
        throw ConfigError("aggregate: no participant passed the exclusion checks");
    }
    out.matrix = mean_matrix(included, ids);
    return out;
}

std::string to_csv(const DissimilarityMatrix& m, std::span<const std::string> comments) {
    std::ostringstream os;
    for (const auto& c : comments) {
        os << '#' << c << '\n';
    }
    for (std::size_t i = 0; i < m.size(); ++i) {
        os << (i ? "," : "") << m.ids[i];
    }
    os << '\n';
    for (std::size_t i = 0; i < m.size(); ++i) {
        for (std::size_t j = 0; j < m.size(); ++j) {
            os << (j ? "," : "") << io::format_double(m.values(i, j));
        }
        os << '\n';
    }
    return os.str();
}

DissimilarityMatrix matrix_from_csv(std::string_view text) {
    const auto table = io::parse_csv(text);
    const std::size_t n = table.header.size();
    if (table.rows.size() != n) {
        throw ParseError("matrix csv: expected " + std::to_string(n) + " rows", table.rows.size());
    }
    DissimilarityMatrix m{table.header, Matrix(n, n)};
    for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t j = 0; j < n; ++j) {
            m.values(i, j) = io::parse_double(table.rows[i][j], i + 1);
        }
    }
    validate(m);
    return m;
}

DissimilarityMatrix read_matrix_csv(const std::filesystem::path& path) {
    return matrix_from_csv(io::read_text(path));
}

}  // namespace timbre::ratings
