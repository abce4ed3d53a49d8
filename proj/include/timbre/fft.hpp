#pragma once

#include <complex>
#include <cstddef>
#include <span>
#include <vector>

namespace timbre {

// Real-input forward DFT of a fixed length, backed by FFTW. Plans are created
// once per length under a lock; execution is thread-safe.
class RealFft {
public:
    explicit RealFft(std::size_t n);

    std::size_t size() const noexcept { return n_; }
    std::size_t bins() const noexcept { return n_ / 2 + 1; }

    // Unnormalized X[k] = sum_n x[n] e^{-2 pi i k n / N}, k = 0..N/2.
    std::vector<std::complex<double>> forward(std::span<const double> input) const;

    // |X[k]| for k = 0..N/2.
    std::vector<double> magnitudes(std::span<const double> input) const;

private:
    std::size_t n_;
    void* plan_;  // fftw_plan, owned by the process-wide plan cache
};

}  // namespace timbre
