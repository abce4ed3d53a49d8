#pragma once

// STFT-based acoustic descriptors. Per-frame values are averaged over frames;
// degenerate frames (silent, or single-bin for kurtosis) are excluded from
// the means.

#include <array>
#include <cstddef>
#include <optional>
#include <span>
#include <string_view>
#include <vector>

#include "timbre/kernels.hpp"
#include "timbre/synth.hpp"

namespace timbre::descriptors {

inline constexpr std::size_t kWindow = 2048;
inline constexpr std::size_t kHop = 512;

struct Spectrogram {
    long sample_rate = kSampleRate;
    std::size_t window = kWindow;
    std::size_t hop = kHop;
    std::vector<std::vector<double>> frames;  // |X[k]|, k = 0..window/2
    std::vector<double> frame_times;          // start of each frame, seconds

    double bin_hz() const { return static_cast<double>(sample_rate) / static_cast<double>(window); }
    std::size_t bins() const { return window / 2 + 1; }
    std::vector<double> bin_freqs() const;
};

// Throws ConfigError when the buffer is shorter than one window.
Spectrogram stft(const AudioBuffer& buffer, kernels::Execution exec = kernels::Execution::parallel);

// Frame-level descriptors. `frame` is a magnitude spectrum with bin k at
// frequency k * bin_hz (bin 0 is DC).
double spectral_centroid(std::span<const double> frame, double bin_hz);
double spectral_spread(std::span<const double> frame, double bin_hz);
double spectral_rolloff(std::span<const double> frame, double bin_hz, double fraction = 0.85);

struct Kurtosis {
    double value = 0.0;
    bool degenerate = false;  // zero spread or fewer than two nonzero bins
};
Kurtosis spectral_kurtosis(std::span<const double> frame, double bin_hz);

// Bins above DC are indexed k = 1..K (frame[k]); returns
// sum_{k>=2} (m_k - m_1)/(k-1) / sum_{k>=2} m_k, or 0 when the denominator is 0.
double spectral_decrease(std::span<const double> frame);

// Number of local maxima (greater than the left neighbour, not less than the
// right) whose magnitude is at least threshold * max(frame).
int spectral_complexity(std::span<const double> frame, double threshold = 0.005);

// Per-frame flux series; entry 0 is 0.
std::vector<double> spectral_flux(const Spectrogram& spec, bool normalize = true);

// a_h for h = 1..floor(Nyquist/f0): largest local maximum within
// +-min(tolerance*f0, f0/2) of h*f0, 0 when the band holds no local maximum.
// With `interpolate` the peak height is refined by a parabola through the
// log magnitudes of the peak bin and its neighbours (Hann scalloping drops
// from up to 1.4 dB to about 0.3 dB).
std::vector<double> harmonic_amplitudes(std::span<const double> frame, double bin_hz,
                                        double f0_hz = kFundamentalHz, double tolerance = 0.2,
                                        bool interpolate = true);

struct Tristimulus {
    double t1 = 0.0;
    double t2 = 0.0;
    double t3 = 0.0;
};
Tristimulus tristimulus(std::span<const double> harmonics);

inline constexpr double kOddEvenCap = 1e10;
// Odd over even harmonic energy (or amplitude when use_energy is false).
// Capped at kOddEvenCap when the even sum is 0; 1 when both sums are 0.
double odd_even_ratio(std::span<const double> harmonics, bool use_energy = true);

// log10 of the 20%->90% rise time of the frame-RMS envelope (window 2048,
// hop 512, interpolated between frame centres), floored at 1 ms.
// Throws ConfigError for a silent buffer.
double log_attack_time(const AudioBuffer& buffer,
                       kernels::Execution exec = kernels::Execution::parallel);

struct DescriptorVector {
    double spectral_complexity = 0.0;
    double spectral_flux = 0.0;
    double log_attack_time = 0.0;
    double tristimulus_3 = 0.0;
    double spectral_decrease = 0.0;
    double tristimulus_2 = 0.0;
    double spectral_kurtosis = 0.0;
    double odd_even_ratio = 0.0;
    double spectral_centroid = 0.0;
    // Candidates that only take part in collinearity screening.
    double spectral_rolloff = 0.0;
    double spectral_spread = 0.0;
    double tristimulus_1 = 0.0;

    static constexpr std::size_t kCount = 12;
    // Canonical column names, in output order.
    static const std::array<std::string_view, kCount>& names();
    std::array<double, kCount> values() const;
    double get(std::string_view name) const;

    bool operator==(const DescriptorVector&) const = default;
};

struct ExtractOptions {
    double f0_hz = kFundamentalHz;
    double rolloff_fraction = 0.85;
    double complexity_threshold = 0.005;
    double harmonic_tolerance = 0.2;
    bool interpolate_harmonic_peaks = true;
    bool normalized_flux = true;
    bool odd_even_energy = true;
};

// Throws ConfigError for silent or too-short buffers.
DescriptorVector extract(const AudioBuffer& buffer, const ExtractOptions& options = {},
                         kernels::Execution exec = kernels::Execution::parallel);

}  // namespace timbre::descriptors
