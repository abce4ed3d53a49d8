#include "timbre/descriptors.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>

#include "timbre/errors.hpp"

namespace timbre::descriptors {
namespace {

bool is_local_max(std::span<const double> m, std::size_t k) {
    const bool above_left = k == 0 || m[k] > m[k - 1];
    const bool not_below_right = k + 1 == m.size() || m[k] >= m[k + 1];
    return above_left && not_below_right;
}

// Log-parabolic estimate of the peak height around local maximum k; falls back
// to the raw bin at the edges or next to an empty bin.
double interpolated_peak(std::span<const double> m, std::size_t k) {
    if (k == 0 || k + 1 >= m.size() || m[k - 1] <= 0.0 || m[k + 1] <= 0.0) {
        return m[k];
    }
    const double a = std::log(m[k - 1]);
    const double b = std::log(m[k]);
    const double c = std::log(m[k + 1]);
    const double curvature = a - 2.0 * b + c;
    if (curvature >= 0.0) {
        return m[k];
    }
    const double offset = 0.5 * (a - c) / curvature;
    return std::exp(b - 0.25 * (a - c) * offset);
}

double sum_of(std::span<const double> v) { return std::accumulate(v.begin(), v.end(), 0.0); }

struct FrameValues {
    bool silent = true;
    double centroid = 0.0;
    double spread = 0.0;
    double rolloff = 0.0;
    Kurtosis kurtosis;
    double decrease = 0.0;
    double complexity = 0.0;
    bool harmonic = false;
    Tristimulus tri;
    double odd_even = 0.0;
};

FrameValues frame_values(std::span<const double> frame, double bin_hz, const ExtractOptions& o) {
    FrameValues v;
    if (sum_of(frame) <= 0.0) {
        return v;
    }
    v.silent = false;
    v.centroid = spectral_centroid(frame, bin_hz);
    v.spread = spectral_spread(frame, bin_hz);
    v.rolloff = spectral_rolloff(frame, bin_hz, o.rolloff_fraction);
    v.kurtosis = spectral_kurtosis(frame, bin_hz);
    v.decrease = spectral_decrease(frame);
    v.complexity = static_cast<double>(spectral_complexity(frame, o.complexity_threshold));
    const auto harmonics =
        harmonic_amplitudes(frame, bin_hz, o.f0_hz, o.harmonic_tolerance, o.interpolate_harmonic_peaks);
    if (sum_of(harmonics) > 0.0) {
        v.harmonic = true;
        v.tri = tristimulus(harmonics);
        v.odd_even = odd_even_ratio(harmonics, o.odd_even_energy);
    }
    return v;
}

class Mean {
public:
    void add(double x) {
        sum_ += x;
        ++count_;
    }
    double value() const { return count_ == 0 ? 0.0 : sum_ / static_cast<double>(count_); }

private:
    double sum_ = 0.0;
    std::size_t count_ = 0;
};

}  // namespace

std::vector<double> Spectrogram::bin_freqs() const {
    std::vector<double> f(bins());
    for (std::size_t k = 0; k < f.size(); ++k) {
        f[k] = static_cast<double>(k) * bin_hz();
    }
    return f;
}

Spectrogram stft(const AudioBuffer& buffer, kernels::Execution exec) {
    if (buffer.samples.size() < kWindow) {
        throw ConfigError("stft: buffer shorter than one analysis window");
    }
    Spectrogram spec;
    spec.sample_rate = buffer.sample_rate;
    spec.frames = kernels::stft_magnitudes(buffer.samples, {kWindow, kHop}, exec);
    spec.frame_times.resize(spec.frames.size());
    for (std::size_t f = 0; f < spec.frames.size(); ++f) {
        spec.frame_times[f] =
            static_cast<double>(f * kHop) / static_cast<double>(buffer.sample_rate);
    }
    return spec;
}

double spectral_centroid(std::span<const double> frame, double bin_hz) {
    double weighted = 0.0;
    double total = 0.0;
    for (std::size_t k = 0; k < frame.size(); ++k) {
        weighted += static_cast<double>(k) * bin_hz * frame[k];
        total += frame[k];
    }
    return total > 0.0 ? weighted / total : 0.0;
}

double spectral_spread(std::span<const double> frame, double bin_hz) {
    const double total = sum_of(frame);
    if (total <= 0.0) {
        return 0.0;
    }
    const double mu = spectral_centroid(frame, bin_hz);
    double var = 0.0;
    for (std::size_t k = 0; k < frame.size(); ++k) {
        const double d = static_cast<double>(k) * bin_hz - mu;
        var += frame[k] / total * d * d;
    }
    return std::sqrt(var);
}

double spectral_rolloff(std::span<const double> frame, double bin_hz, double fraction) {
    double total = 0.0;
    for (double m : frame) {
        total += m * m;
    }
    if (total <= 0.0) {
        return 0.0;
    }
    double cumulative = 0.0;
    for (std::size_t k = 0; k < frame.size(); ++k) {
        cumulative += frame[k] * frame[k];
        if (cumulative >= fraction * total) {
            return static_cast<double>(k) * bin_hz;
        }
    }
    return static_cast<double>(frame.size() - 1) * bin_hz;
}

Kurtosis spectral_kurtosis(std::span<const double> frame, double bin_hz) {
    const double total = sum_of(frame);
    const auto nonzero = std::count_if(frame.begin(), frame.end(), [](double m) { return m > 0.0; });
    if (total <= 0.0 || nonzero < 2) {
        return {0.0, true};
    }
    const double mu = spectral_centroid(frame, bin_hz);
    double m2 = 0.0;
    double m4 = 0.0;
    for (std::size_t k = 0; k < frame.size(); ++k) {
        const double p = frame[k] / total;
        const double d2 = std::pow(static_cast<double>(k) * bin_hz - mu, 2);
        m2 += p * d2;
        m4 += p * d2 * d2;
    }
    if (m2 <= 0.0) {
        return {0.0, true};
    }
    return {m4 / (m2 * m2), false};
}

double spectral_decrease(std::span<const double> frame) {
    if (frame.size() < 3) {
        return 0.0;
    }
    const double m1 = frame[1];
    double numerator = 0.0;
    double denominator = 0.0;
    for (std::size_t k = 2; k < frame.size(); ++k) {
        numerator += (frame[k] - m1) / static_cast<double>(k - 1);
        denominator += frame[k];
    }
    return denominator > 0.0 ? numerator / denominator : 0.0;
}

int spectral_complexity(std::span<const double> frame, double threshold) {
    if (frame.empty()) {
        return 0;
    }
    const double peak = *std::max_element(frame.begin(), frame.end());
    if (peak <= 0.0) {
        return 0;
    }
    int count = 0;
    for (std::size_t k = 0; k < frame.size(); ++k) {
        if (frame[k] >= threshold * peak && is_local_max(frame, k)) {
            ++count;
        }
    }
    return count;
}

std::vector<double> spectral_flux(const Spectrogram& spec, bool normalize) {
    const std::size_t frames = spec.frames.size();
    std::vector<double> flux(frames, 0.0);
    auto scale_of = [&](const std::vector<double>& m) {
        if (!normalize) {
            return 1.0;
        }
        double norm = 0.0;
        for (double x : m) {
            norm += x * x;
        }
        return norm > 0.0 ? 1.0 / std::sqrt(norm) : 0.0;
    };
    for (std::size_t t = 1; t < frames; ++t) {
        const auto& cur = spec.frames[t];
        const auto& prev = spec.frames[t - 1];
        const double sc = scale_of(cur);
        const double sp = scale_of(prev);
        double acc = 0.0;
        for (std::size_t k = 0; k < cur.size(); ++k) {
            const double d = cur[k] * sc - prev[k] * sp;
            acc += d * d;
        }
        flux[t] = std::sqrt(acc);
    }
    return flux;
}

std::vector<double> harmonic_amplitudes(std::span<const double> frame, double bin_hz,
                                        double f0_hz, double tolerance, bool interpolate) {
    if (!(f0_hz > 0.0)) {
        throw ConfigError("harmonic_amplitudes: f0 must be positive");
    }
    const double nyquist = bin_hz * static_cast<double>(frame.size() - 1);
    const auto count = static_cast<std::size_t>(std::floor(nyquist / f0_hz));
    const double half_band = std::min(tolerance * f0_hz, f0_hz / 2.0);
    std::vector<double> a(count, 0.0);
    for (std::size_t h = 1; h <= count; ++h) {
        const double centre = static_cast<double>(h) * f0_hz;
        const auto lo = static_cast<std::size_t>(std::max(0.0, std::ceil((centre - half_band) / bin_hz)));
        const auto hi = std::min(frame.size() - 1,
                                 static_cast<std::size_t>(std::floor((centre + half_band) / bin_hz)));
        double best = 0.0;
        std::size_t best_k = 0;
        for (std::size_t k = lo; k <= hi; ++k) {
            if (is_local_max(frame, k) && frame[k] > best) {
                best = frame[k];
                best_k = k;
            }
        }
        a[h - 1] = best > 0.0 && interpolate ? interpolated_peak(frame, best_k) : best;
    }
    return a;
}

Tristimulus tristimulus(std::span<const double> harmonics) {
    const double total = sum_of(harmonics);
    if (total <= 0.0) {
        return {};
    }
    Tristimulus t;
    double t2 = 0.0;
    double t3 = 0.0;
    for (std::size_t i = 0; i < harmonics.size(); ++i) {
        const std::size_t h = i + 1;
        if (h >= 2 && h <= 4) {
            t2 += harmonics[i];
        } else if (h >= 5) {
            t3 += harmonics[i];
        }
    }
    t.t1 = harmonics.empty() ? 0.0 : harmonics[0] / total;
    t.t2 = t2 / total;
    t.t3 = t3 / total;
    return t;
}

double odd_even_ratio(std::span<const double> harmonics, bool use_energy) {
    double odd = 0.0;
    double even = 0.0;
    for (std::size_t i = 0; i < harmonics.size(); ++i) {
        const double v = use_energy ? harmonics[i] * harmonics[i] : harmonics[i];
        ((i + 1) % 2 == 1 ? odd : even) += v;
    }
    if (even <= 0.0) {
        return odd <= 0.0 ? 1.0 : kOddEvenCap;
    }
    return std::min(odd / even, kOddEvenCap);
}

double log_attack_time(const AudioBuffer& buffer, kernels::Execution exec) {
    const kernels::FrameLayout layout{kWindow, kHop};
    if (buffer.samples.size() < kWindow) {
        throw ConfigError("log_attack_time: buffer shorter than one analysis window");
    }
    const auto env = kernels::frame_rms(buffer.samples, layout, exec);
    const double peak = *std::max_element(env.begin(), env.end());
    if (peak <= 0.0) {
        throw ConfigError("log_attack_time: silent buffer");
    }
    const double sr = static_cast<double>(buffer.sample_rate);
    auto centre = [&](std::size_t f) {
        return (static_cast<double>(f * kHop) + static_cast<double>(kWindow) / 2.0) / sr;
    };
    // First crossing of `level` at or after frame `from`, linearly
    // interpolated between frame centres. Returns the frame index too.
    auto crossing = [&](double level, std::size_t from) -> std::pair<double, std::size_t> {
        for (std::size_t f = from; f < env.size(); ++f) {
            if (env[f] >= level) {
                if (f == from) {
                    return {centre(f), f};
                }
                const double frac = (level - env[f - 1]) / (env[f] - env[f - 1]);
                return {centre(f - 1) + frac * (centre(f) - centre(f - 1)), f};
            }
        }
        return {centre(env.size() - 1), env.size() - 1};
    };
    const auto [t_start, f_start] = crossing(0.2 * peak, 0);
    // The 90% search resumes in the segment that holds the 20% crossing.
    const std::size_t resume = f_start == 0 ? 0 : f_start - 1;
    const double t_stop = std::max(crossing(0.9 * peak, resume).first, t_start);
    return std::log10(std::max(t_stop - t_start, 1e-3));
}

const std::array<std::string_view, DescriptorVector::kCount>& DescriptorVector::names() {
    static const std::array<std::string_view, kCount> n = {
        "spectral_complexity", "spectral_flux",     "log_attack_time",   "tristimulus_3",
        "spectral_decrease",   "tristimulus_2",     "spectral_kurtosis", "odd_even_ratio",
        "spectral_centroid",   "spectral_rolloff",  "spectral_spread",   "tristimulus_1"};
    return n;
}

std::array<double, DescriptorVector::kCount> DescriptorVector::values() const {
    return {spectral_complexity, spectral_flux,     log_attack_time,   tristimulus_3,
            spectral_decrease,   tristimulus_2,     spectral_kurtosis, odd_even_ratio,
            spectral_centroid,   spectral_rolloff,  spectral_spread,   tristimulus_1};
}

double DescriptorVector::get(std::string_view name) const {
    const auto& n = names();
    const auto it = std::find(n.begin(), n.end(), name);
    if (it == n.end()) {
        throw std::out_of_range("unknown descriptor '" + std::string(name) + "'");
    }
    return values()[static_cast<std::size_t>(it - n.begin())];
}

DescriptorVector extract(const AudioBuffer& buffer, const ExtractOptions& options,
                         kernels::Execution exec) {
    const double lat = log_attack_time(buffer, exec);
    const Spectrogram spec = stft(buffer, exec);
    const double bin_hz = spec.bin_hz();

    std::vector<FrameValues> per_frame(spec.frames.size());
    const auto count = static_cast<std::ptrdiff_t>(per_frame.size());
    if (exec == kernels::Execution::parallel) {
#pragma omp parallel for schedule(static)
        for (std::ptrdiff_t f = 0; f < count; ++f) {
            const auto i = static_cast<std::size_t>(f);
            per_frame[i] = frame_values(spec.frames[i], bin_hz, options);
        }
    } else {
        for (std::ptrdiff_t f = 0; f < count; ++f) {
            const auto i = static_cast<std::size_t>(f);
            per_frame[i] = frame_values(spec.frames[i], bin_hz, options);
        }
    }
    const auto flux = spectral_flux(spec, options.normalized_flux);

    Mean centroid, spread, rolloff, kurtosis, decrease, complexity, flux_mean, t1, t2, t3, odd_even;
    for (std::size_t f = 0; f < per_frame.size(); ++f) {
        const auto& v = per_frame[f];
        if (v.silent) {
            continue;
        }
        centroid.add(v.centroid);
        spread.add(v.spread);
        rolloff.add(v.rolloff);
        decrease.add(v.decrease);
        complexity.add(v.complexity);
        if (!v.kurtosis.degenerate) {
            kurtosis.add(v.kurtosis.value);
        }
        if (f > 0) {
            flux_mean.add(flux[f]);
        }
        if (v.harmonic) {
            t1.add(v.tri.t1);
            t2.add(v.tri.t2);
            t3.add(v.tri.t3);
            odd_even.add(v.odd_even);
        }
    }

    DescriptorVector d;
    d.spectral_complexity = complexity.value();
    d.spectral_flux = flux_mean.value();
    d.log_attack_time = lat;
    d.tristimulus_3 = t3.value();
    d.spectral_decrease = decrease.value();
    d.tristimulus_2 = t2.value();
    d.spectral_kurtosis = kurtosis.value();
    d.odd_even_ratio = odd_even.value();
    d.spectral_centroid = centroid.value();
    d.spectral_rolloff = rolloff.value();
    d.spectral_spread = spread.value();
    d.tristimulus_1 = t1.value();
    return d;
}

}  // namespace timbre::descriptors
