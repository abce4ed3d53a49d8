#include "timbre/fft.hpp"

#include <fftw3.h>

#include <algorithm>
#include <map>
#include <memory>
#include <mutex>
#include <stdexcept>

namespace timbre {
namespace {

struct FftwDeleter {
    void operator()(void* p) const { fftw_free(p); }
};

std::mutex& planner_mutex() {
    static std::mutex m;
    return m;
}

fftw_plan plan_for(std::size_t n) {
    static std::map<std::size_t, fftw_plan> cache;
    std::lock_guard lock(planner_mutex());
    if (auto it = cache.find(n); it != cache.end()) {
        return it->second;
    }
    std::unique_ptr<double, FftwDeleter> in(fftw_alloc_real(n));
    std::unique_ptr<fftw_complex, FftwDeleter> out(fftw_alloc_complex(n / 2 + 1));
    // FFTW_ESTIMATE keeps the plan, and hence rounding, independent of timing.
    fftw_plan plan = fftw_plan_dft_r2c_1d(static_cast<int>(n), in.get(), out.get(),
                                          FFTW_ESTIMATE | FFTW_DESTROY_INPUT);
    if (plan == nullptr) {
        throw std::runtime_error("fftw: failed to create plan");
    }
    cache.emplace(n, plan);
    return plan;
}

}  // namespace

RealFft::RealFft(std::size_t n) : n_(n), plan_(nullptr) {
    if (n < 2) {
        throw std::invalid_argument("RealFft: length must be at least 2");
    }
    plan_ = plan_for(n);
}

std::vector<std::complex<double>> RealFft::forward(std::span<const double> input) const {
    if (input.size() != n_) {
        throw std::invalid_argument("RealFft: input length mismatch");
    }
    std::unique_ptr<double, FftwDeleter> in(fftw_alloc_real(n_));
    std::unique_ptr<fftw_complex, FftwDeleter> out(fftw_alloc_complex(bins()));
    std::copy(input.begin(), input.end(), in.get());
    fftw_execute_dft_r2c(static_cast<fftw_plan>(plan_), in.get(), out.get());

    std::vector<std::complex<double>> result(bins());
    for (std::size_t k = 0; k < result.size(); ++k) {
        result[k] = {out.get()[k][0], out.get()[k][1]};
    }
    return result;
}

std::vector<double> RealFft::magnitudes(std::span<const double> input) const {
    const auto spectrum = forward(input);
    std::vector<double> mags(spectrum.size());
    std::transform(spectrum.begin(), spectrum.end(), mags.begin(),
                   [](const std::complex<double>& c) { return std::abs(c); });
    return mags;
}

}  // namespace timbre
