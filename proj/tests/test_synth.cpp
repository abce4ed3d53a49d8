#include <algorithm>
#include <cmath>
#include <random>

#include "doctest.h"
#include "support.hpp"
#include "timbre/errors.hpp"
#include "timbre/fft.hpp"
#include "timbre/synth.hpp"

using namespace timbre;
using testing::basic_patch;

namespace {

double db(double x) { return 20.0 * std::log10(x); }

// |X|/N at 1 Hz resolution (one-second buffers).
std::vector<double> spectrum(const AudioBuffer& b) {
    RealFft fft(b.samples.size());
    auto m = fft.magnitudes(b.samples);
    for (double& v : m) {
        v /= static_cast<double>(b.samples.size());
    }
    return m;
}

}  // namespace

TEST_CASE("adsr_value follows the linear segments") {
    const AdsrEnvelope env{0.1, 0.2, 0.5, 0.1};
    CHECK(adsr_value(env, 0.0, 1.0) == doctest::Approx(0.0));
    CHECK(adsr_value(env, 0.1, 1.0) == doctest::Approx(1.0));
    CHECK(adsr_value(env, 0.5, 1.0) == doctest::Approx(0.5));
    CHECK(adsr_value(env, 0.05, 1.0) == doctest::Approx(0.5));
    CHECK(adsr_value(env, 0.2, 1.0) == doctest::Approx(0.75));
    CHECK(adsr_value(env, 0.95, 1.0) == doctest::Approx(0.25));
    CHECK(adsr_value(env, 1.0, 1.0) == doctest::Approx(0.0));
}

TEST_CASE("adsr rejects invalid envelopes") {
    CHECK_THROWS_AS(validate(AdsrEnvelope{-0.1, 0.1, 0.5, 0.1}, 1.0), ConfigError);
    CHECK_THROWS_AS(validate(AdsrEnvelope{0.5, 0.4, 0.5, 0.2}, 1.0), ConfigError);
    CHECK_THROWS_AS(validate(AdsrEnvelope{0.1, 0.1, 1.5, 0.1}, 1.0), ConfigError);
    CHECK_THROWS_AS(adsr_value(AdsrEnvelope{0.6, 0.6, 0.5, 0.0}, 0.0, 1.0), ConfigError);
}

TEST_CASE("adsr is continuous: per-sample step bounded by the steepest segment") {
    std::mt19937_64 gen(11);
    std::uniform_real_distribution<double> u(0.0, 1.0);
    const double sr = 44100.0;
    for (int trial = 0; trial < 200; ++trial) {
        AdsrEnvelope env{0.3 * u(gen), 0.3 * u(gen), u(gen), 0.3 * u(gen)};
        double min_seg = 1e9;
        for (double s : {env.attack_s, env.decay_s, env.release_s}) {
            if (s > 0.0) {
                min_seg = std::min(min_seg, s);
            }
        }
        double prev = adsr_value(env, 0.0, 1.0);
        double worst = 0.0;
        for (int i = 1; i <= 44100; ++i) {
            const double v = adsr_value(env, i / sr, 1.0);
            worst = std::max(worst, std::abs(v - prev));
            prev = v;
        }
        CHECK(worst <= (1.0 / min_seg) / sr + 1e-12);
    }
}

TEST_CASE("patch validation") {
    Patch p = basic_patch();
    CHECK_NOTHROW(validate(p));
    p.f0_hz = 441.0;
    CHECK_THROWS_AS(validate(p), ConfigError);
    p = basic_patch();
    p.duration_ms = 900;
    CHECK_THROWS_AS(validate(p), ConfigError);
    p = basic_patch();
    p.filter.cutoff_floor_hz = 5000.0;
    p.filter.cutoff_peak_hz = 1000.0;
    CHECK_THROWS_AS(validate(p), ConfigError);
    p = basic_patch(Waveform::pulse);
    p.oscillator.duty = 1.0;
    CHECK_THROWS_AS(validate(p), ConfigError);
    p = basic_patch();
    p.fm = FmSettings{0, 1.0};
    CHECK_THROWS_AS(validate(p), ConfigError);
    for (const char* id : {"", "../x", "a b", "a/b"}) {
        p = basic_patch();
        p.id = id;
        CHECK_THROWS_AS(validate(p), ConfigError);
    }
    p = basic_patch();
    p.id = "saw_fm-2.v1";
    CHECK_NOTHROW(validate(p));
}

TEST_CASE("render_source: zero modulation index is bit-identical to the plain oscillator") {
    for (auto w : {Waveform::sawtooth, Waveform::pulse}) {
        Patch plain = basic_patch(w);
        Patch fm = plain;
        fm.fm = FmSettings{2, 0.0};
        CHECK(render_source(plain).samples == render_source(fm).samples);
    }
}

TEST_CASE("render_source: initial phase 0 and closed-form harmonic amplitudes") {
    const auto saw = render_source(basic_patch());
    CHECK(saw.samples.size() == 44100);
    CHECK(saw.samples[0] == doctest::Approx(0.0).epsilon(1e-12));
    const auto s = spectrum(saw);
    for (int h = 1; h <= 50; ++h) {
        // A sine of amplitude A shows |X|/N = A/2 on its bin.
        CHECK(2.0 * s[440 * h] == doctest::Approx(2.0 / (testing::kPi * h)).epsilon(1e-9));
    }
}

TEST_CASE("render_source: pulse(0.5) has no even harmonics") {
    const auto s = spectrum(render_source(basic_patch(Waveform::pulse)));
    for (int h = 2; h <= 48; h += 2) {
        const double even = s[440 * h];
        const double odd = std::min(s[440 * (h - 1)], s[440 * (h + 1)]);
        CHECK(db(even + 1e-300) <= db(odd) - 40.0);
    }
}

TEST_CASE("render_source: integer-ratio FM keeps every spectral peak harmonic") {
    for (int k : {1, 2, 3}) {
        Patch p = basic_patch();
        p.fm = FmSettings{k, 1.0};
        const auto s = spectrum(render_source(p));
        const double top = *std::max_element(s.begin(), s.end());
        for (std::size_t b = 1; b + 1 < s.size(); ++b) {
            if (s[b] > s[b - 1] && s[b] >= s[b + 1] && s[b] > top * 1e-4) {
                const long nearest = std::lround(static_cast<double>(b) / 440.0) * 440;
                CHECK(std::abs(static_cast<long>(b) - nearest) <= 1);
            }
        }
    }
}

TEST_CASE("render_source: no aliasing, matches a 4x oversampled direct evaluation") {
    const long over_sr = 4 * kSampleRate;
    for (auto w : {Waveform::sawtooth, Waveform::pulse}) {
        Patch p = basic_patch(w);
        p.oscillator.duty = 0.3;
        p.fm = FmSettings{3, 0.5};
        const auto s = spectrum(render_source(p));
        double alias = 0.0;
        for (std::size_t b = 1; b < s.size(); ++b) {
            if (b % 440 != 0) {
                alias += s[b] * s[b];
            }
        }
        CHECK(10.0 * std::log10(alias + 1e-300) <= db(s[440]) - 60.0);

        // Oracle: evaluate the same 50-term source series at phase
        // phi(t) = w t + I sin(k w t) directly in the time domain at 4x the
        // rate. Components that alias at 4x land off the 440 Hz grid, so the
        // harmonic bins below the base Nyquist are clean.
        AudioBuffer direct{over_sr, std::vector<double>(static_cast<std::size_t>(over_sr))};
        for (std::size_t i = 0; i < direct.samples.size(); ++i) {
            const double t = static_cast<double>(i) / static_cast<double>(over_sr);
            const double phi = 2.0 * testing::kPi * 440.0 * t + 0.5 * std::sin(2.0 * testing::kPi * 3.0 * 440.0 * t);
            double x = 0.0;
            for (int h = 1; h <= 50; ++h) {
                x += w == Waveform::sawtooth
                         ? 2.0 / (testing::kPi * h) * std::sin(h * phi)
                         : 4.0 / (testing::kPi * h) * std::sin(testing::kPi * h * 0.3) * std::cos(h * phi);
            }
            direct.samples[i] = x;
        }
        const auto o = spectrum(direct);
        for (int h = 1; h <= 50; ++h) {
            CHECK(o[440 * h] == doctest::Approx(s[440 * h]).epsilon(1e-6));
        }
    }
}

TEST_CASE("svf_lowpass: unity DC gain, silence, stopband attenuation") {
    AudioBuffer dc{kSampleRate, std::vector<double>(44100, 0.5)};
    for (double fc : {100.0, 1000.0, 5000.0}) {
        const std::vector<double> cutoff(44100, fc);
        const auto y = svf_lowpass(dc, cutoff, 0.707);
        CHECK(y.samples.back() == doctest::Approx(0.5).epsilon(2e-3));
    }
    AudioBuffer zero{kSampleRate, std::vector<double>(4096, 0.0)};
    const auto z = svf_lowpass(zero, std::vector<double>(4096, 1000.0), 2.0);
    CHECK(std::all_of(z.samples.begin(), z.samples.end(), [](double v) { return v == 0.0; }));

    std::mt19937_64 gen(3);
    std::normal_distribution<double> nd(0.0, 0.1);
    AudioBuffer noise{kSampleRate, std::vector<double>(44100)};
    for (double& v : noise.samples) {
        v = nd(gen);
    }
    const auto filtered = svf_lowpass(noise, std::vector<double>(44100, 1000.0), 0.707);
    auto band = [](const AudioBuffer& b) {
        const auto s = spectrum(b);
        double e = 0.0;
        for (std::size_t k = 4000; k <= 8000; ++k) {
            e += s[k] * s[k];
        }
        return e;
    };
    CHECK(10.0 * std::log10(band(filtered) / band(noise)) <= -20.0);
}

TEST_CASE("svf_lowpass rejects cutoffs outside (0, Nyquist)") {
    AudioBuffer x{kSampleRate, std::vector<double>(16, 0.1)};
    CHECK_THROWS_AS(svf_lowpass(x, std::vector<double>(16, 0.0), 1.0), ConfigError);
    CHECK_THROWS_AS(svf_lowpass(x, std::vector<double>(16, 22050.0), 1.0), ConfigError);
    CHECK_THROWS_AS(svf_lowpass(x, std::vector<double>(15, 1000.0), 1.0), ConfigError);
}

TEST_CASE("a_weighting_db") {
    CHECK(std::abs(a_weighting_db(1000.0)) <= 0.01);
    // Closed-form values evaluated independently at 30 significant digits.
    CHECK(a_weighting_db(100.0) == doctest::Approx(-19.1449542913).epsilon(1e-9));
    CHECK(a_weighting_db(12194.0) == doctest::Approx(-4.0368377152).epsilon(1e-9));
    // Grid search: the curve peaks near 2.5 kHz.
    double best_f = 0.0;
    double best = -1e9;
    for (double f = 10.0; f < 22050.0; f += 1.0) {
        const double a = a_weighting_db(f);
        if (a > best) {
            best = a;
            best_f = f;
        }
    }
    CHECK(best_f >= 2400.0);
    CHECK(best_f <= 2600.0);
    CHECK(best > a_weighting_db(12194.0));
    CHECK_THROWS_AS(a_weighting_db(0.0), std::domain_error);
    CHECK_THROWS_AS(a_weighting_db(-5.0), std::domain_error);
}

TEST_CASE("a_weighted_rms") {
    CHECK(a_weighted_rms(AudioBuffer{kSampleRate, std::vector<double>(4410, 0.0)}) == 0.0);
    CHECK(a_weighted_rms(testing::sine(1000.0)) == doctest::Approx(1.0 / std::sqrt(2.0)).epsilon(0.01));
    const double ratio = a_weighted_rms(testing::sine(100.0)) / a_weighted_rms(testing::sine(1000.0));
    CHECK(ratio == doctest::Approx(std::pow(10.0, a_weighting_db(100.0) / 20.0)).epsilon(0.01));
}

TEST_CASE("render_patch over the study bank") {
    const auto bank = testing::study_bank();
    REQUIRE(bank.patches.size() == 15);
    std::vector<double> levels;
    for (const auto& p : bank.patches) {
        const auto r = render_patch(p);
        CHECK(r.audio.samples.size() == 44100);
        CHECK(std::abs(r.audio.samples.back()) < 1e-3);
        const double peak = std::abs(*std::max_element(r.audio.samples.begin(), r.audio.samples.end(),
                                                      [](double a, double b) { return std::abs(a) < std::abs(b); }));
        CHECK(peak <= 1.0);
        levels.push_back(linear_to_db(a_weighted_rms(r.audio)));
    }
    const auto [lo, hi] = std::minmax_element(levels.begin(), levels.end());
    CHECK(*hi - *lo <= 0.1);
}

TEST_CASE("render_patch is deterministic and independent of the execution mode") {
    const auto bank = testing::study_bank();
    for (const auto& p : bank.patches) {
        const auto a = render_patch(p, kernels::Execution::parallel);
        const auto b = render_patch(p, kernels::Execution::serial);
        CHECK(a.audio == b.audio);
        CHECK(render_patch(p).audio == a.audio);
    }
}

TEST_CASE("render_patch scales down and records the deviation when the target would clip") {
    Patch p = basic_patch();
    p.filter.cutoff_floor_hz = 20.0;
    p.filter.cutoff_peak_hz = 20.0;
    p.filter.resonance_q = 0.707;
    const auto r = render_patch(p);
    const double peak = std::abs(*std::max_element(r.audio.samples.begin(), r.audio.samples.end(),
                                                  [](double a, double b) { return std::abs(a) < std::abs(b); }));
    CHECK(peak <= 1.0);
    CHECK(r.clip_deviation_db < 0.0);
    CHECK(linear_to_db(a_weighted_rms(r.audio)) == doctest::Approx(kTargetLevelDbfs + r.clip_deviation_db).epsilon(1e-6));
}
