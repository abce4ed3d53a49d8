#include "timbre/kernels.hpp"

#include <cmath>
#include <numbers>
#include <stdexcept>

namespace timbre::kernels {
namespace {

std::vector<double> cycle_table(long sample_rate, bool sine) {
    std::vector<double> table(static_cast<std::size_t>(sample_rate));
    for (long i = 0; i < sample_rate; ++i) {
        const double angle = 2.0 * std::numbers::pi * static_cast<double>(i) /
                             static_cast<double>(sample_rate);
        table[static_cast<std::size_t>(i)] = sine ? std::sin(angle) : std::cos(angle);
    }
    return table;
}

void check_synthesis_args(const HarmonicSeries& series, long f0_hz, long sample_rate) {
    if (series.cos_coefs.size() != series.sin_coefs.size()) {
        throw std::invalid_argument("additive_synthesis: coefficient length mismatch");
    }
    if (f0_hz <= 0 || sample_rate <= 0) {
        throw std::invalid_argument("additive_synthesis: f0 and sample rate must be positive");
    }
}

inline double synth_sample(const HarmonicSeries& series, long f0_hz, long sample_rate,
                           const std::vector<double>& cos_table,
                           const std::vector<double>& sin_table, std::size_t i) {
    // Phase of harmonic n at sample i, in table steps: n*f0*i mod sr. The
    // per-harmonic increment f0*i mod sr is accumulated modularly.
    const long step = static_cast<long>((static_cast<unsigned long long>(f0_hz) * i) %
                                        static_cast<unsigned long long>(sample_rate));
    long phase = 0;
    double acc = 0.0;
    for (std::size_t h = 0; h < series.cos_coefs.size(); ++h) {
        phase += step;
        if (phase >= sample_rate) {
            phase -= sample_rate;
        }
        const auto p = static_cast<std::size_t>(phase);
        acc += series.cos_coefs[h] * cos_table[p] + series.sin_coefs[h] * sin_table[p];
    }
    return acc;
}

inline std::vector<double> windowed_frame(std::span<const double> samples,
                                          const std::vector<double>& window,
                                          std::size_t start) {
    std::vector<double> frame(window.size());
    for (std::size_t n = 0; n < window.size(); ++n) {
        frame[n] = samples[start + n] * window[n];
    }
    return frame;
}

inline double rms_at(std::span<const double> samples, std::size_t start, std::size_t window) {
    double acc = 0.0;
    for (std::size_t n = 0; n < window; ++n) {
        acc += samples[start + n] * samples[start + n];
    }
    return std::sqrt(acc / static_cast<double>(window));
}

inline double distance(const Matrix& coords, std::size_t i, std::size_t j) {
    double acc = 0.0;
    for (std::size_t c = 0; c < coords.cols(); ++c) {
        const double d = coords(i, c) - coords(j, c);
        acc += d * d;
    }
    return std::sqrt(acc);
}

}  // namespace

std::vector<double> hann_window(std::size_t n) {
    std::vector<double> w(n);
    if (n == 1) {
        w[0] = 1.0;
        return w;
    }
    for (std::size_t i = 0; i < n; ++i) {
        w[i] = 0.5 * (1.0 - std::cos(2.0 * std::numbers::pi * static_cast<double>(i) /
                                     static_cast<double>(n - 1)));
    }
    return w;
}

namespace serial {

std::vector<double> additive_synthesis(const HarmonicSeries& series, long f0_hz,
                                       long sample_rate, std::size_t length) {
    check_synthesis_args(series, f0_hz, sample_rate);
    const auto cos_table = cycle_table(sample_rate, false);
    const auto sin_table = cycle_table(sample_rate, true);
    std::vector<double> out(length);
    for (std::size_t i = 0; i < length; ++i) {
        out[i] = synth_sample(series, f0_hz, sample_rate, cos_table, sin_table, i);
    }
    return out;
}

std::vector<std::vector<double>> stft_magnitudes(std::span<const double> samples,
                                                 FrameLayout layout) {
    const std::size_t frames = layout.frame_count(samples.size());
    const auto window = hann_window(layout.window);
    const RealFft fft(layout.window);
    std::vector<std::vector<double>> out(frames);
    for (std::size_t f = 0; f < frames; ++f) {
        out[f] = fft.magnitudes(windowed_frame(samples, window, f * layout.hop));
    }
    return out;
}

std::vector<double> frame_rms(std::span<const double> samples, FrameLayout layout) {
    const std::size_t frames = layout.frame_count(samples.size());
    std::vector<double> out(frames);
    for (std::size_t f = 0; f < frames; ++f) {
        out[f] = rms_at(samples, f * layout.hop, layout.window);
    }
    return out;
}

std::vector<double> pairwise_distances(const Matrix& coords) {
    const std::size_t n = coords.rows();
    std::vector<double> out(n < 2 ? 0 : n * (n - 1) / 2);
    for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t j = i + 1; j < n; ++j) {
            out[pair_index(i, j, n)] = distance(coords, i, j);
        }
    }
    return out;
}

}  // namespace serial

namespace parallel {

std::vector<double> additive_synthesis(const HarmonicSeries& series, long f0_hz,
                                       long sample_rate, std::size_t length) {
    check_synthesis_args(series, f0_hz, sample_rate);
    const auto cos_table = cycle_table(sample_rate, false);
    const auto sin_table = cycle_table(sample_rate, true);
    std::vector<double> out(length);
    const auto count = static_cast<std::ptrdiff_t>(length);
#pragma omp parallel for schedule(static)
    for (std::ptrdiff_t i = 0; i < count; ++i) {
        out[static_cast<std::size_t>(i)] = synth_sample(series, f0_hz, sample_rate, cos_table,
                                                        sin_table, static_cast<std::size_t>(i));
    }
    return out;
}

std::vector<std::vector<double>> stft_magnitudes(std::span<const double> samples,
                                                 FrameLayout layout) {
    const std::size_t frames = layout.frame_count(samples.size());
    const auto window = hann_window(layout.window);
    const RealFft fft(layout.window);
    std::vector<std::vector<double>> out(frames);
    const auto count = static_cast<std::ptrdiff_t>(frames);
#pragma omp parallel for schedule(static)
    for (std::ptrdiff_t f = 0; f < count; ++f) {
        const auto idx = static_cast<std::size_t>(f);
        out[idx] = fft.magnitudes(windowed_frame(samples, window, idx * layout.hop));
    }
    return out;
}

std::vector<double> frame_rms(std::span<const double> samples, FrameLayout layout) {
    const std::size_t frames = layout.frame_count(samples.size());
    std::vector<double> out(frames);
    const auto count = static_cast<std::ptrdiff_t>(frames);
#pragma omp parallel for schedule(static)
    for (std::ptrdiff_t f = 0; f < count; ++f) {
        const auto idx = static_cast<std::size_t>(f);
        out[idx] = rms_at(samples, idx * layout.hop, layout.window);
    }
    return out;
}

std::vector<double> pairwise_distances(const Matrix& coords) {
    const std::size_t n = coords.rows();
    std::vector<double> out(n < 2 ? 0 : n * (n - 1) / 2);
    const auto rows = static_cast<std::ptrdiff_t>(n);
#pragma omp parallel for schedule(dynamic, 4)
    for (std::ptrdiff_t i = 0; i < rows; ++i) {
        const auto ui = static_cast<std::size_t>(i);
        for (std::size_t j = ui + 1; j < n; ++j) {
            out[pair_index(ui, j, n)] = distance(coords, ui, j);
        }
    }
    return out;
}

}  // namespace parallel

std::vector<double> additive_synthesis(const HarmonicSeries& series, long f0_hz,
                                       long sample_rate, std::size_t length, Execution exec) {
    return exec == Execution::serial
               ? serial::additive_synthesis(series, f0_hz, sample_rate, length)
               : parallel::additive_synthesis(series, f0_hz, sample_rate, length);
}

std::vector<std::vector<double>> stft_magnitudes(std::span<const double> samples,
                                                 FrameLayout layout, Execution exec) {
    return exec == Execution::serial ? serial::stft_magnitudes(samples, layout)
                                     : parallel::stft_magnitudes(samples, layout);
}

std::vector<double> frame_rms(std::span<const double> samples, FrameLayout layout,
                              Execution exec) {
    return exec == Execution::serial ? serial::frame_rms(samples, layout)
                                     : parallel::frame_rms(samples, layout);
}

std::vector<double> pairwise_distances(const Matrix& coords, Execution exec) {
    return exec == Execution::serial ? serial::pairwise_distances(coords)
                                     : parallel::pairwise_distances(coords);
}

}  // namespace timbre::kernels
