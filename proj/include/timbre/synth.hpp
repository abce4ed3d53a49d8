#pragma once

// Offline subtractive synthesizer: bandlimited oscillator with optional
// integer-ratio phase modulation, resonant state-variable lowpass driven by a
// cutoff envelope, enveloped master gain, A-weighted loudness normalization.

#include <cmath>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "timbre/kernels.hpp"

namespace timbre {

inline constexpr long kSampleRate = 44100;
inline constexpr double kFundamentalHz = 440.0;
inline constexpr int kDurationMs = 1000;
// Common A-weighted RMS level for every rendered stimulus.
inline constexpr double kTargetLevelDbfs = -20.0;
// Lower bound on the filter cutoff; keeps the state-variable filter well-behaved.
inline constexpr double kMinCutoffHz = 20.0;

struct AdsrEnvelope {
    double attack_s = 0.0;
    double decay_s = 0.0;
    double sustain_level = 1.0;
    double release_s = 0.0;

    bool operator==(const AdsrEnvelope&) const = default;
};

enum class Waveform { sawtooth, pulse };

struct Oscillator {
    Waveform waveform = Waveform::sawtooth;
    double duty = 0.5;  // pulse only, in (0, 1)

    bool operator==(const Oscillator&) const = default;
};

struct FmSettings {
    int ratio = 1;       // modulator frequency = ratio * f0
    double index = 0.0;  // peak phase deviation in radians

    bool operator==(const FmSettings&) const = default;
};

struct FilterSettings {
    double cutoff_floor_hz = kMinCutoffHz;
    double cutoff_peak_hz = 8000.0;
    double resonance_q = 0.707;
    AdsrEnvelope envelope;

    bool operator==(const FilterSettings&) const = default;
};

struct Patch {
    std::string id;
    Oscillator oscillator;
    double f0_hz = kFundamentalHz;
    std::optional<FmSettings> fm;
    FilterSettings filter;
    AdsrEnvelope gain_envelope;
    int duration_ms = kDurationMs;

    double duration_s() const { return duration_ms / 1000.0; }
    bool operator==(const Patch&) const = default;
};

struct AudioBuffer {
    long sample_rate = kSampleRate;
    std::vector<double> samples;

    bool operator==(const AudioBuffer&) const = default;
};

// Throws ConfigError on negative segments, sustain outside [0,1] or segments
// that do not fit in the note.
void validate(const AdsrEnvelope& env, double duration_s);
void validate(const Patch& patch, long sample_rate = kSampleRate);

// Piecewise-linear ADSR level at time t of a note lasting duration_s. The
// release segment ends exactly at duration_s.
double adsr_value(const AdsrEnvelope& env, double t, double duration_s);

// Fourier coefficients (harmonics 1..N below Nyquist) of the phase-modulated
// bandlimited oscillator. Exact: the modulated spectrum is expanded with
// Bessel functions and every component above Nyquist is dropped.
kernels::HarmonicSeries source_spectrum(const Patch& patch, long sample_rate);

// Oscillator (with FM) only, no filter, gain or normalization.
AudioBuffer render_source(const Patch& patch, long sample_rate = kSampleRate,
                          kernels::Execution exec = kernels::Execution::parallel);

// Chamberlin state-variable lowpass, coefficients updated per sample.
// Cutoffs must lie in (0, Nyquist); values above sample_rate/6 are clamped.
AudioBuffer svf_lowpass(const AudioBuffer& input, std::span<const double> cutoff_hz, double q);

// A(f) in dB; 0 at 1 kHz. Throws std::domain_error for f <= 0.
double a_weighting_db(double f_hz);

// RMS after A-weighting the full-buffer magnitude spectrum (Parseval).
double a_weighted_rms(const AudioBuffer& buffer);

struct RenderedStimulus {
    AudioBuffer audio;
    double a_weighted_rms = 0.0;
    double gain = 0.0;              // normalization factor applied to the raw chain
    double clip_deviation_db = 0.0; // < 0 when the peak clamp lowered the level
};

RenderedStimulus render_patch(const Patch& patch,
                              kernels::Execution exec = kernels::Execution::parallel);

inline double linear_to_db(double x) { return 20.0 * std::log10(x); }

}  // namespace timbre
