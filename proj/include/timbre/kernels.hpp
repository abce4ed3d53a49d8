#pragma once

// Data-parallel inner loops. Every kernel has a serial reference in
// kernels::serial and an OpenMP version in kernels::parallel; both produce
// bit-identical output because each element is computed by the same
// arithmetic in the same order regardless of thread assignment.

#include <cstddef>
#include <span>
#include <vector>

#include "timbre/fft.hpp"
#include "timbre/matrix.hpp"

namespace timbre::kernels {

enum class Execution { serial, parallel };

// Sum of harmonics n = 1..N of f0, sampled at sample_rate:
//   x[i] = sum_n cos_coefs[n-1] cos(2 pi n f0 i / sr) + sin_coefs[n-1] sin(...)
// f0 and sample_rate must be integers; the phase is reduced exactly in
// integer arithmetic and looked up in a one-cycle table of sample_rate entries.
struct HarmonicSeries {
    std::vector<double> cos_coefs;
    std::vector<double> sin_coefs;
};

// Hann-windowed magnitude frames; frames start at 0, advance by hop, and the
// incomplete tail is dropped.
struct FrameLayout {
    std::size_t window = 2048;
    std::size_t hop = 512;
    std::size_t frame_count(std::size_t length) const {
        return length < window ? 0 : (length - window) / hop + 1;
    }
};

std::vector<double> hann_window(std::size_t n);

namespace serial {
std::vector<double> additive_synthesis(const HarmonicSeries& series, long f0_hz,
                                       long sample_rate, std::size_t length);
std::vector<std::vector<double>> stft_magnitudes(std::span<const double> samples,
                                                 FrameLayout layout);
std::vector<double> frame_rms(std::span<const double> samples, FrameLayout layout);
std::vector<double> pairwise_distances(const Matrix& coords);
}  // namespace serial

namespace parallel {
std::vector<double> additive_synthesis(const HarmonicSeries& series, long f0_hz,
                                       long sample_rate, std::size_t length);
std::vector<std::vector<double>> stft_magnitudes(std::span<const double> samples,
                                                 FrameLayout layout);
std::vector<double> frame_rms(std::span<const double> samples, FrameLayout layout);
std::vector<double> pairwise_distances(const Matrix& coords);
}  // namespace parallel

// Dispatch helpers used by the library modules.
std::vector<double> additive_synthesis(const HarmonicSeries& series, long f0_hz,
                                       long sample_rate, std::size_t length,
                                       Execution exec = Execution::parallel);
std::vector<std::vector<double>> stft_magnitudes(std::span<const double> samples,
                                                 FrameLayout layout,
                                                 Execution exec = Execution::parallel);
std::vector<double> frame_rms(std::span<const double> samples, FrameLayout layout,
                              Execution exec = Execution::parallel);
std::vector<double> pairwise_distances(const Matrix& coords,
                                       Execution exec = Execution::parallel);

// Index of pair (i, j), i < j, in the row-major upper-triangle ordering.
inline std::size_t pair_index(std::size_t i, std::size_t j, std::size_t n) {
    return i * n - i * (i + 1) / 2 + (j - i - 1);
}

}  // namespace timbre::kernels
