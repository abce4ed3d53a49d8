#pragma once

#include <cmath>
#include <complex>
#include <filesystem>
#include <numbers>
#include <random>
#include <string>
#include <vector>

#include "timbre/bank.hpp"
#include "timbre/synth.hpp"

namespace testing {

inline constexpr double kPi = std::numbers::pi;

inline timbre::AudioBuffer sine(double freq, double amp = 1.0, std::size_t n = 44100, long sr = 44100) {
    timbre::AudioBuffer b{sr, std::vector<double>(n)};
    for (std::size_t i = 0; i < n; ++i) {
        b.samples[i] = amp * std::sin(2.0 * kPi * freq * static_cast<double>(i) / sr);
    }
    return b;
}

// O(N^2) DFT magnitude, k = 0..N/2. Deliberately naive: used as an oracle.
inline std::vector<double> naive_dft_magnitudes(const std::vector<double>& x) {
    const std::size_t n = x.size();
    std::vector<double> out(n / 2 + 1);
    for (std::size_t k = 0; k <= n / 2; ++k) {
        std::complex<double> acc = 0.0;
        for (std::size_t t = 0; t < n; ++t) {
            const double ph = -2.0 * kPi * static_cast<double>((k * t) % n) / static_cast<double>(n);
            acc += x[t] * std::complex<double>(std::cos(ph), std::sin(ph));
        }
        out[k] = std::abs(acc);
    }
    return out;
}

inline timbre::Patch basic_patch(timbre::Waveform w = timbre::Waveform::sawtooth) {
    timbre::Patch p;
    p.id = "p";
    p.oscillator.waveform = w;
    p.filter.cutoff_floor_hz = 20000.0;
    p.filter.cutoff_peak_hz = 20000.0;
    p.filter.resonance_q = 0.707;
    p.gain_envelope = {0.01, 0.1, 0.8, 0.1};
    return p;
}

inline std::filesystem::path config_dir() { return TIMBRE_CONFIG_DIR; }

inline timbre::StimulusBank study_bank() { return timbre::load_bank(config_dir() / "bank_v1.json"); }

struct TempDir {
    std::filesystem::path path;
    explicit TempDir(const std::string& tag) {
        std::random_device rd;
        path = std::filesystem::temp_directory_path() /
               ("timbre-" + tag + "-" + std::to_string(rd()) + std::to_string(rd()));
        std::filesystem::create_directories(path);
    }
    ~TempDir() {
        std::error_code ec;
        std::filesystem::remove_all(path, ec);
    }
};

}  // namespace testing
