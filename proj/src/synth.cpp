#include "timbre/synth.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <numbers>
#include <stdexcept>

#include "timbre/errors.hpp"
#include "timbre/fft.hpp"

namespace timbre {
namespace {

constexpr double kTimeEps = 1e-9;

double bessel_j(int order, double x) {
    if (x == 0.0) {
        return order == 0 ? 1.0 : 0.0;
    }
    const int m = std::abs(order);
    const double j = std::cyl_bessel_j(static_cast<double>(m), x);
    return (order < 0 && (m % 2) != 0) ? -j : j;
}

}  // namespace

void validate(const AdsrEnvelope& env, double duration_s) {
    if (!(env.attack_s >= 0.0) || !(env.decay_s >= 0.0) || !(env.release_s >= 0.0)) {
        throw ConfigError("ADSR segment times must be non-negative");
    }
    if (!(env.sustain_level >= 0.0 && env.sustain_level <= 1.0)) {
        throw ConfigError("ADSR sustain level must lie in [0, 1]");
    }
    if (env.attack_s + env.decay_s + env.release_s > duration_s + kTimeEps) {
        throw ConfigError("ADSR segments exceed the note duration");
    }
}

double adsr_value(const AdsrEnvelope& env, double t, double duration_s) {
    validate(env, duration_s);
    if (t < 0.0 || t > duration_s + kTimeEps) {
        throw ConfigError("ADSR evaluated outside the note");
    }
    const double release_start = duration_s - env.release_s;
    if (env.release_s > 0.0 && t >= release_start) {
        const double frac = std::min((t - release_start) / env.release_s, 1.0);
        return env.sustain_level * (1.0 - frac);
    }
    if (t < env.attack_s) {
        return t / env.attack_s;
    }
    const double decay_end = env.attack_s + env.decay_s;
    if (t < decay_end) {
        return 1.0 + (env.sustain_level - 1.0) * (t - env.attack_s) / env.decay_s;
    }
    return env.sustain_level;
}

void validate(const Patch& patch, long sample_rate) {
    if (patch.id.empty()) {
        throw ConfigError("patch id must not be empty");
    }
    // ids become file names and URL segments
    for (const char c : patch.id) {
        if (!std::isalnum(static_cast<unsigned char>(c)) && c != '_' && c != '-' && c != '.') {
            throw ConfigError("patch " + patch.id + ": id may only contain letters, digits, '_', '-', '.'");
        }
    }
    if (patch.f0_hz != kFundamentalHz) {
        throw ConfigError("patch " + patch.id + ": f0 must be 440 Hz");
    }
    if (patch.duration_ms != kDurationMs) {
        throw ConfigError("patch " + patch.id + ": duration must be 1000 ms");
    }
    if (patch.oscillator.waveform == Waveform::pulse &&
        !(patch.oscillator.duty > 0.0 && patch.oscillator.duty < 1.0)) {
        throw ConfigError("patch " + patch.id + ": pulse duty must lie in (0, 1)");
    }
    if (patch.fm) {
        if (patch.fm->ratio < 1) {
            throw ConfigError("patch " + patch.id + ": FM ratio must be a positive integer");
        }
        if (!(patch.fm->index >= 0.0)) {
            throw ConfigError("patch " + patch.id + ": FM index must be non-negative");
        }
    }
    const auto& f = patch.filter;
    const double nyquist = static_cast<double>(sample_rate) / 2.0;
    if (!(f.cutoff_floor_hz >= 0.0 && f.cutoff_floor_hz <= f.cutoff_peak_hz &&
          f.cutoff_peak_hz <= nyquist)) {
        throw ConfigError("patch " + patch.id + ": need 0 <= cutoff_floor <= cutoff_peak <= Nyquist");
    }
    if (!(f.resonance_q > 0.0)) {
        throw ConfigError("patch " + patch.id + ": resonance must be positive");
    }
    validate(f.envelope, patch.duration_s());
    validate(patch.gain_envelope, patch.duration_s());
}

kernels::HarmonicSeries source_spectrum(const Patch& patch, long sample_rate) {
    const double nyquist = static_cast<double>(sample_rate) / 2.0;
    // Harmonics strictly below Nyquist.
    const int harmonics = static_cast<int>(std::ceil(nyquist / patch.f0_hz)) - 1;
    const std::size_t count = static_cast<std::size_t>(std::max(harmonics, 0));

    // Unmodulated source: s(phi) = sum_h a_h cos(h phi) + b_h sin(h phi).
    std::vector<double> a(count, 0.0);
    std::vector<double> b(count, 0.0);
    for (std::size_t i = 0; i < count; ++i) {
        const double h = static_cast<double>(i + 1);
        if (patch.oscillator.waveform == Waveform::sawtooth) {
            b[i] = (2.0 / std::numbers::pi) / h;
        } else {
            a[i] = (4.0 / std::numbers::pi) * std::sin(std::numbers::pi * h * patch.oscillator.duty) / h;
        }
    }

    // Phase modulation phi = w t + I sin(k w t) turns harmonic h into
    // sum_m J_m(h I) at harmonic h + m k. Negative harmonics fold onto |n|
    // (cos is even, sin is odd); DC and components above Nyquist are dropped.
    const int ratio = patch.fm ? patch.fm->ratio : 1;
    const double index = patch.fm ? patch.fm->index : 0.0;
    const int top = static_cast<int>(count);
    kernels::HarmonicSeries out{std::vector<double>(count, 0.0), std::vector<double>(count, 0.0)};
    for (int h = 1; h <= top; ++h) {
        const double beta = h * index;
        const int m_lo = -((top + h) / ratio);
        const int m_hi = (top - h) / ratio;
        for (int m = m_lo; m <= m_hi; ++m) {
            const int n = h + m * ratio;
            if (n == 0) {
                continue;
            }
            const double j = bessel_j(m, beta);
            const auto slot = static_cast<std::size_t>(std::abs(n) - 1);
            out.cos_coefs[slot] += j * a[static_cast<std::size_t>(h - 1)];
            if (n > 0) {
                out.sin_coefs[slot] += j * b[static_cast<std::size_t>(h - 1)];
            } else {
                out.sin_coefs[slot] -= j * b[static_cast<std::size_t>(h - 1)];
            }
        }
    }
    return out;
}

AudioBuffer render_source(const Patch& patch, long sample_rate, kernels::Execution exec) {
    validate(patch, sample_rate);
    const auto length =
        static_cast<std::size_t>(sample_rate) * static_cast<std::size_t>(patch.duration_ms) / 1000;
    AudioBuffer out{sample_rate, {}};
    out.samples = kernels::additive_synthesis(source_spectrum(patch, sample_rate),
                                              static_cast<long>(patch.f0_hz), sample_rate,
                                              length, exec);
    return out;
}

AudioBuffer svf_lowpass(const AudioBuffer& input, std::span<const double> cutoff_hz, double q) {
    if (cutoff_hz.size() != input.samples.size()) {
        throw ConfigError("svf_lowpass: cutoff series length must match the buffer");
    }
    if (!(q > 0.0)) {
        throw ConfigError("svf_lowpass: resonance must be positive");
    }
    const double sr = static_cast<double>(input.sample_rate);
    const double nyquist = sr / 2.0;
    const double damping = 1.0 / q;
    // Stability of the Chamberlin recursion requires f^2 + 2 f damping < 4.
    const double f_stable = 0.98 * (std::sqrt(damping * damping + 4.0) - damping);
    const double f_max = std::min(2.0 * std::sin(std::numbers::pi / 6.0), f_stable);

    AudioBuffer out{input.sample_rate, std::vector<double>(input.samples.size())};
    double low = 0.0;
    double band = 0.0;
    for (std::size_t i = 0; i < input.samples.size(); ++i) {
        const double fc = cutoff_hz[i];
        if (!(fc > 0.0 && fc < nyquist)) {
            throw ConfigError("svf_lowpass: cutoff must lie in (0, Nyquist)");
        }
        const double f = std::min(2.0 * std::sin(std::numbers::pi * std::min(fc, sr / 6.0) / sr), f_max);
        low += f * band;
        const double high = input.samples[i] - low - damping * band;
        band += f * high;
        out.samples[i] = low;
    }
    return out;
}

double a_weighting_db(double f_hz) {
    if (!(f_hz > 0.0)) {
        throw std::domain_error("a_weighting_db: frequency must be positive");
    }
    const double f2 = f_hz * f_hz;
    const double c1 = 20.6 * 20.6;
    const double c2 = 107.7 * 107.7;
    const double c3 = 737.9 * 737.9;
    const double c4 = 12194.0 * 12194.0;
    const double ra = c4 * f2 * f2 / ((f2 + c1) * std::sqrt((f2 + c2) * (f2 + c3)) * (f2 + c4));
    return 20.0 * std::log10(ra) + 2.00;
}

double a_weighted_rms(const AudioBuffer& buffer) {
    const std::size_t n = buffer.samples.size();
    if (n == 0) {
        throw ConfigError("a_weighted_rms: empty buffer");
    }
    if (std::all_of(buffer.samples.begin(), buffer.samples.end(),
                    [](double x) { return x == 0.0; })) {
        return 0.0;
    }
    if (n < 2) {
        return 0.0;
    }
    const RealFft fft(n);
    const auto spectrum = fft.forward(buffer.samples);
    const double bin_hz = static_cast<double>(buffer.sample_rate) / static_cast<double>(n);
    // One-sided Parseval: interior bins count twice, DC (weight 0) and an
    // exact Nyquist bin once.
    double energy = 0.0;
    for (std::size_t k = 1; k < spectrum.size(); ++k) {
        const double gain = std::pow(10.0, a_weighting_db(static_cast<double>(k) * bin_hz) / 20.0);
        const double mult = (n % 2 == 0 && k == n / 2) ? 1.0 : 2.0;
        energy += mult * std::norm(spectrum[k]) * gain * gain;
    }
    return std::sqrt(energy) / static_cast<double>(n);
}

RenderedStimulus render_patch(const Patch& patch, kernels::Execution exec) {
    validate(patch, kSampleRate);
    AudioBuffer source = render_source(patch, kSampleRate, exec);
    const std::size_t length = source.samples.size();
    const double duration = patch.duration_s();
    const double sr = static_cast<double>(kSampleRate);

    const auto& filt = patch.filter;
    const double floor_hz = std::max(filt.cutoff_floor_hz, kMinCutoffHz);
    const double peak_hz = std::max(filt.cutoff_peak_hz, floor_hz);
    std::vector<double> cutoff(length);
    for (std::size_t i = 0; i < length; ++i) {
        const double t = static_cast<double>(i) / sr;
        cutoff[i] = floor_hz + (peak_hz - floor_hz) * adsr_value(filt.envelope, t, duration);
        cutoff[i] = std::min(cutoff[i], std::nextafter(sr / 2.0, 0.0));
    }
    AudioBuffer shaped = svf_lowpass(source, cutoff, filt.resonance_q);
    for (std::size_t i = 0; i < length; ++i) {
        const double t = static_cast<double>(i) / sr;
        shaped.samples[i] *= adsr_value(patch.gain_envelope, t, duration);
    }

    const double raw_level = a_weighted_rms(shaped);
    if (raw_level == 0.0) {
        throw ConfigError("patch " + patch.id + ": renders silence");
    }
    const double target = std::pow(10.0, kTargetLevelDbfs / 20.0);
    double gain = target / raw_level;
    double peak = 0.0;
    for (double x : shaped.samples) {
        peak = std::max(peak, std::abs(x));
    }
    RenderedStimulus result;
    if (peak * gain > 1.0) {
        const double clamped = 1.0 / peak;
        result.clip_deviation_db = linear_to_db(clamped / gain);
        gain = clamped;
    }
    for (double& x : shaped.samples) {
        x = std::clamp(x * gain, -1.0, 1.0);
    }
    result.gain = gain;
    result.a_weighted_rms = a_weighted_rms(shaped);
    result.audio = std::move(shaped);
    return result;
}

}  // namespace timbre
