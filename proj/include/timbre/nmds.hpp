#pragma once

// Kruskal non-metric multidimensional scaling: stress-1 minimisation with
// monotone (isotonic) regression, classical-scaling warm start, scree
// computation and Procrustes alignment.

#include <cstdint>
#include <span>
#include <vector>

#include "timbre/kernels.hpp"
#include "timbre/matrix.hpp"
#include "timbre/ratings.hpp"

namespace timbre::mds {

using ratings::DissimilarityMatrix;

enum class RSquaredConvention {
    dissimilarity_vs_disparity,  // squared Pearson r of original dissimilarities and disparities
    disparity_vs_distance,
};

struct MdsConfig {
    std::size_t dims = 2;
    int max_iters = 500;
    double stress_tol = 1e-7;  // relative stress improvement
    int restarts = 20;
    std::uint64_t seed = 0;
    RSquaredConvention r_squared = RSquaredConvention::dissimilarity_vs_disparity;
    // Restarts run concurrently under Execution::parallel; the result is the
    // same either way.
    kernels::Execution exec = kernels::Execution::parallel;
};

struct MdsSolution {
    Matrix coords;                    // n x dims, column means 0
    double stress1 = 0.0;
    double r_squared = 0.0;           // per MdsConfig::r_squared
    double r_squared_alternate = 0.0; // the other convention
    std::vector<double> disparities;  // upper-triangle pair order
    std::vector<double> distances;
    int iterations_used = 0;
    int restart_index = 0;
    std::vector<double> stress_history;  // stress after every accepted step

    bool operator==(const MdsSolution&) const = default;
};

struct SymmetricEigen {
    std::vector<double> values;  // descending
    Matrix vectors;              // column k pairs with values[k]
};

// Cyclic Jacobi; iterates until the off-diagonal Frobenius norm is at most
// tol * max(1, ||A||_F).
SymmetricEigen jacobi_eigen(const Matrix& a, double tol = 1e-12, int max_sweeps = 100);

// Torgerson scaling of a full n x n dissimilarity matrix.
Matrix classical_mds(const Matrix& dissimilarities, std::size_t dims);
Matrix classical_mds(const DissimilarityMatrix& d, std::size_t dims);

// Least-squares monotone regression of distances on the dissimilarity order
// (Kruskal's primary approach to ties). Output is in input pair order.
std::vector<double> isotonic_fit(std::span<const double> dissimilarities,
                                 std::span<const double> distances);

// sqrt(sum (d - dhat)^2 / sum d^2). Throws ConfigError if all d are zero.
double stress1(std::span<const double> distances, std::span<const double> disparities);

double squared_pearson(std::span<const double> x, std::span<const double> y);

// One descent run from a given configuration (restart_index is left at 0).
MdsSolution refine(const DissimilarityMatrix& d, const Matrix& initial, const MdsConfig& cfg);

// Best of cfg.restarts runs: run 0 starts from classical scaling, the rest
// from seeded standard-normal configurations. `extra_starts` are appended as
// further runs (used by scree to carry lower-dimensional solutions upward).
MdsSolution nmds_fit(const DissimilarityMatrix& d, const MdsConfig& cfg,
                     std::span<const Matrix> extra_starts = {});

struct ScreeRow {
    std::size_t dims = 0;
    double stress1 = 0.0;
    double r_squared = 0.0;
    MdsSolution solution;
};

// nmds_fit for dims = 1..max_dims. Each dimensionality also starts one run
// from the previous solution padded with a zero column, so stress cannot
// increase with dims.
std::vector<ScreeRow> scree(const DissimilarityMatrix& d, std::size_t max_dims,
                            const MdsConfig& cfg);

struct Procrustes {
    Matrix aligned;     // s * Yc * Q + mean(X)
    Matrix rotation;    // d x d orthogonal
    double scale = 1.0;
    double residual = 0.0;  // ||Xc - s Yc Q||_F / ||Xc||_F
};

// Optimal translation, orthogonal transform and isotropic scale taking Y onto X.
Procrustes procrustes_align(const Matrix& x, const Matrix& y);

}  // namespace timbre::mds
