#include "timbre/nmds.hpp"

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <exception>
#include <numeric>

#include "timbre/errors.hpp"
#include "timbre/rng.hpp"

namespace timbre::mds {
namespace {

constexpr double kInitialStep = 0.2;
constexpr double kStepGrowth = 1.05;
constexpr double kMinStep = 1e-12;

void center_columns(Matrix& x) {
    for (std::size_t c = 0; c < x.cols(); ++c) {
        double mean = 0.0;
        for (std::size_t r = 0; r < x.rows(); ++r) {
            mean += x(r, c);
        }
        mean /= static_cast<double>(x.rows());
        for (std::size_t r = 0; r < x.rows(); ++r) {
            x(r, c) -= mean;
        }
    }
}

double frobenius(const Matrix& x) {
    double acc = 0.0;
    for (double v : x.data()) {
        acc += v * v;
    }
    return std::sqrt(acc);
}

void scale_in_place(Matrix& x, double s) {
    for (double& v : x.data()) {
        v *= s;
    }
}

// Centre and scale to unit mean squared row norm; stress is invariant to both.
void normalize(Matrix& x) {
    center_columns(x);
    const double norm = frobenius(x);
    if (norm > 0.0) {
        scale_in_place(x, std::sqrt(static_cast<double>(x.rows())) / norm);
    }
}

// Gradient of stress-1 with respect to the coordinates, disparities fixed.
Matrix stress_gradient(const Matrix& x, std::span<const double> dist,
                       std::span<const double> dhat, double stress) {
    const std::size_t n = x.rows();
    const std::size_t dims = x.cols();
    double raw = 0.0;
    double norm = 0.0;
    for (std::size_t k = 0; k < dist.size(); ++k) {
        raw += (dist[k] - dhat[k]) * (dist[k] - dhat[k]);
        norm += dist[k] * dist[k];
    }
    Matrix g(n, dims);
    if (raw <= 0.0) {
        return g;
    }
    for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t j = i + 1; j < n; ++j) {
            const std::size_t k = kernels::pair_index(i, j, n);
            if (dist[k] <= 0.0) {
                continue;
            }
            // d(S)/d(d_ij) = S * ((d - dhat)/S* - d/T*)
            const double coef =
                stress * ((dist[k] - dhat[k]) / raw - dist[k] / norm) / dist[k];
            for (std::size_t c = 0; c < dims; ++c) {
                const double diff = coef * (x(i, c) - x(j, c));
                g(i, c) += diff;
                g(j, c) -= diff;
            }
        }
    }
    return g;
}

struct Evaluation {
    std::vector<double> dist;
    std::vector<double> dhat;
    double stress = 0.0;
};

Evaluation evaluate(const Matrix& x, std::span<const double> delta) {
    Evaluation e;
    e.dist = kernels::serial::pairwise_distances(x);
    e.dhat = isotonic_fit(delta, e.dist);
    e.stress = stress1(e.dist, e.dhat);
    return e;
}

void check_problem(const DissimilarityMatrix& d, std::size_t dims) {
    ratings::validate(d);
    const std::size_t n = d.size();
    if (n < 3) {
        throw ConfigError("nmds: need at least three objects");
    }
    if (dims < 1 || dims >= n) {
        throw ConfigError("nmds: dims must satisfy 1 <= dims < n");
    }
    const auto upper = d.upper_triangle();
    if (std::all_of(upper.begin(), upper.end(), [](double v) { return v == 0.0; })) {
        throw ConfigError("nmds: degenerate dissimilarity matrix (all zero)");
    }
}

Matrix random_start(std::size_t n, std::size_t dims, std::uint64_t seed, int run) {
    Rng rng(Rng::derive(seed, static_cast<std::uint64_t>(run)));
    Matrix x(n, dims);
    for (double& v : x.data()) {
        v = rng.normal();
    }
    return x;
}

}  // namespace

SymmetricEigen jacobi_eigen(const Matrix& input, double tol, int max_sweeps) {
    const std::size_t n = input.rows();
    if (input.cols() != n) {
        throw ConfigError("jacobi_eigen: matrix must be square");
    }
    Matrix a = input;
    Matrix v(n, n);
    for (std::size_t i = 0; i < n; ++i) {
        v(i, i) = 1.0;
    }
    const double limit = tol * std::max(1.0, frobenius(a));
    for (int sweep = 0; sweep < max_sweeps; ++sweep) {
        double off = 0.0;
        for (std::size_t p = 0; p < n; ++p) {
            for (std::size_t q = 0; q < n; ++q) {
                if (p != q) {
                    off += a(p, q) * a(p, q);
                }
            }
        }
        if (std::sqrt(off) <= limit) {
            break;
        }
        for (std::size_t p = 0; p + 1 < n; ++p) {
            for (std::size_t q = p + 1; q < n; ++q) {
                const double apq = a(p, q);
                if (apq == 0.0) {
                    continue;
                }
                const double theta = (a(q, q) - a(p, p)) / (2.0 * apq);
                const double t = (theta >= 0.0 ? 1.0 : -1.0) /
                                 (std::abs(theta) + std::sqrt(theta * theta + 1.0));
                const double c = 1.0 / std::sqrt(t * t + 1.0);
                const double s = t * c;
                for (std::size_t k = 0; k < n; ++k) {
                    const double akp = a(k, p);
                    const double akq = a(k, q);
                    a(k, p) = c * akp - s * akq;
                    a(k, q) = s * akp + c * akq;
                }
                for (std::size_t k = 0; k < n; ++k) {
                    const double apk = a(p, k);
                    const double aqk = a(q, k);
                    a(p, k) = c * apk - s * aqk;
                    a(q, k) = s * apk + c * aqk;
                }
                a(p, q) = 0.0;
                a(q, p) = 0.0;
                for (std::size_t k = 0; k < n; ++k) {
                    const double vkp = v(k, p);
                    const double vkq = v(k, q);
                    v(k, p) = c * vkp - s * vkq;
                    v(k, q) = s * vkp + c * vkq;
                }
            }
        }
    }

    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(),
                     [&](std::size_t i, std::size_t j) { return a(i, i) > a(j, j); });
    SymmetricEigen out{std::vector<double>(n), Matrix(n, n)};
    for (std::size_t k = 0; k < n; ++k) {
        out.values[k] = a(order[k], order[k]);
        for (std::size_t r = 0; r < n; ++r) {
            out.vectors(r, k) = v(r, order[k]);
        }
    }
    return out;
}

Matrix classical_mds(const Matrix& dissimilarities, std::size_t dims) {
    const std::size_t n = dissimilarities.rows();
    if (dissimilarities.cols() != n) {
        throw ConfigError("classical_mds: matrix must be square");
    }
    if (dims >= n) {
        throw ConfigError("classical_mds: dims must be smaller than the number of objects");
    }
    Matrix sq(n, n);
    std::vector<double> row_mean(n, 0.0);
    double grand = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t j = 0; j < n; ++j) {
            sq(i, j) = dissimilarities(i, j) * dissimilarities(i, j);
            row_mean[i] += sq(i, j);
        }
        grand += row_mean[i];
        row_mean[i] /= static_cast<double>(n);
    }
    grand /= static_cast<double>(n * n);
    // Symmetric input, so column means equal row means.
    Matrix b(n, n);
    for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t j = 0; j < n; ++j) {
            b(i, j) = -0.5 * (sq(i, j) - row_mean[i] - row_mean[j] + grand);
        }
    }
    const SymmetricEigen eig = jacobi_eigen(b);
    Matrix coords(n, dims);
    for (std::size_t k = 0; k < dims; ++k) {
        const double scale = std::sqrt(std::max(eig.values[k], 0.0));
        for (std::size_t i = 0; i < n; ++i) {
            coords(i, k) = eig.vectors(i, k) * scale;
        }
    }
    return coords;
}

Matrix classical_mds(const DissimilarityMatrix& d, std::size_t dims) {
    ratings::validate(d);
    return classical_mds(d.values, dims);
}

std::vector<double> isotonic_fit(std::span<const double> dissimilarities,
                                 std::span<const double> distances) {
    if (dissimilarities.size() != distances.size()) {
        throw ConfigError("isotonic_fit: length mismatch");
    }
    if (distances.empty()) {
        throw ConfigError("isotonic_fit: empty input");
    }
    const std::size_t m = distances.size();
    std::vector<std::size_t> order(m);
    std::iota(order.begin(), order.end(), 0);
    // Primary approach: within a block of tied dissimilarities, order by distance.
    std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
        if (dissimilarities[a] != dissimilarities[b]) {
            return dissimilarities[a] < dissimilarities[b];
        }
        return distances[a] < distances[b];
    });

    // Pool adjacent violators over the sorted sequence.
    std::vector<double> block_sum;
    std::vector<std::size_t> block_len;
    block_sum.reserve(m);
    block_len.reserve(m);
    for (std::size_t idx : order) {
        block_sum.push_back(distances[idx]);
        block_len.push_back(1);
        while (block_sum.size() > 1) {
            const std::size_t last = block_sum.size() - 1;
            const double mean_last = block_sum[last] / static_cast<double>(block_len[last]);
            const double mean_prev = block_sum[last - 1] / static_cast<double>(block_len[last - 1]);
            if (mean_prev <= mean_last) {
                break;
            }
            block_sum[last - 1] += block_sum[last];
            block_len[last - 1] += block_len[last];
            block_sum.pop_back();
            block_len.pop_back();
        }
    }

    std::vector<double> fitted(m);
    std::size_t pos = 0;
    for (std::size_t b = 0; b < block_sum.size(); ++b) {
        const double mean = block_sum[b] / static_cast<double>(block_len[b]);
        for (std::size_t k = 0; k < block_len[b]; ++k) {
            fitted[order[pos++]] = mean;
        }
    }
    return fitted;
}

double stress1(std::span<const double> distances, std::span<const double> disparities) {
    if (distances.size() != disparities.size()) {
        throw ConfigError("stress1: length mismatch");
    }
    double raw = 0.0;
    double norm = 0.0;
    for (std::size_t k = 0; k < distances.size(); ++k) {
        const double r = distances[k] - disparities[k];
        raw += r * r;
        norm += distances[k] * distances[k];
    }
    if (norm <= 0.0) {
        throw ConfigError("stress1: all distances are zero");
    }
    return std::sqrt(raw / norm);
}

double squared_pearson(std::span<const double> x, std::span<const double> y) {
    const std::size_t n = x.size();
    if (n != y.size() || n < 2) {
        throw ConfigError("squared_pearson: need two equal-length series");
    }
    const double mx = std::accumulate(x.begin(), x.end(), 0.0) / static_cast<double>(n);
    const double my = std::accumulate(y.begin(), y.end(), 0.0) / static_cast<double>(n);
    double sxy = 0.0, sxx = 0.0, syy = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        sxy += (x[i] - mx) * (y[i] - my);
        sxx += (x[i] - mx) * (x[i] - mx);
        syy += (y[i] - my) * (y[i] - my);
    }
    if (sxx <= 0.0 || syy <= 0.0) {
        return 0.0;
    }
    return std::min(1.0, sxy * sxy / (sxx * syy));
}

MdsSolution refine(const DissimilarityMatrix& d, const Matrix& initial, const MdsConfig& cfg) {
    check_problem(d, cfg.dims);
    const std::size_t n = d.size();
    if (initial.rows() != n || initial.cols() != cfg.dims) {
        throw ConfigError("nmds: initial configuration has the wrong shape");
    }
    const auto delta = d.upper_triangle();
    Matrix x = initial;
    normalize(x);
    if (frobenius(x) == 0.0) {
        throw ConfigError("nmds: initial configuration collapses to a point");
    }
    Evaluation cur = evaluate(x, delta);

    MdsSolution sol;
    sol.stress_history.push_back(cur.stress);
    double step = kInitialStep;
    int iters = 0;
    while (iters < cfg.max_iters && cur.stress > 0.0) {
        const Matrix g = stress_gradient(x, cur.dist, cur.dhat, cur.stress);
        const double gnorm = frobenius(g);
        if (gnorm == 0.0) {
            break;
        }
        ++iters;
        Matrix trial = x;
        const double scale = step * frobenius(x) / gnorm;
        for (std::size_t k = 0; k < trial.data().size(); ++k) {
            trial.data()[k] -= scale * g.data()[k];
        }
        normalize(trial);
        Evaluation next = evaluate(trial, delta);
        if (next.stress <= cur.stress) {
            const double improvement = (cur.stress - next.stress) / cur.stress;
            x = std::move(trial);
            cur = std::move(next);
            sol.stress_history.push_back(cur.stress);
            step *= kStepGrowth;
            if (improvement < cfg.stress_tol) {
                break;
            }
        } else {
            step *= 0.5;
            if (step < kMinStep) {
                break;
            }
        }
    }

    // Report coordinates in dissimilarity units: sum of squared distances
    // matches the sum of squared dissimilarities.
    double dist_sq = 0.0;
    double delta_sq = 0.0;
    for (std::size_t k = 0; k < delta.size(); ++k) {
        dist_sq += cur.dist[k] * cur.dist[k];
        delta_sq += delta[k] * delta[k];
    }
    if (dist_sq > 0.0) {
        scale_in_place(x, std::sqrt(delta_sq / dist_sq));
    }
    center_columns(x);
    Evaluation fin = evaluate(x, delta);

    const double r_primary = squared_pearson(delta, fin.dhat);
    const double r_alt = squared_pearson(fin.dhat, fin.dist);
    const bool standard = cfg.r_squared == RSquaredConvention::dissimilarity_vs_disparity;
    sol.coords = std::move(x);
    sol.stress1 = fin.stress;
    sol.r_squared = standard ? r_primary : r_alt;
    sol.r_squared_alternate = standard ? r_alt : r_primary;
    sol.disparities = std::move(fin.dhat);
    sol.distances = std::move(fin.dist);
    sol.iterations_used = iters;
    return sol;
}

MdsSolution nmds_fit(const DissimilarityMatrix& d, const MdsConfig& cfg,
                     std::span<const Matrix> extra_starts) {
    check_problem(d, cfg.dims);
    if (cfg.restarts < 1) {
        throw ConfigError("nmds: restarts must be at least 1");
    }
    const std::size_t n = d.size();
    std::vector<Matrix> starts;
    starts.push_back(classical_mds(d.values, cfg.dims));
    for (int r = 1; r < cfg.restarts; ++r) {
        starts.push_back(random_start(n, cfg.dims, cfg.seed, r));
    }
    for (const auto& s : extra_starts) {
        starts.push_back(s);
    }
    // A rank-deficient classical start can vanish entirely; reseed it.
    if (frobenius(starts[0]) == 0.0) {
        starts[0] = random_start(n, cfg.dims, cfg.seed, 0);
    }

    std::vector<MdsSolution> runs(starts.size());
    std::vector<std::exception_ptr> errors(starts.size());
    const auto count = static_cast<std::ptrdiff_t>(starts.size());
    const bool parallel = cfg.exec == kernels::Execution::parallel;
#pragma omp parallel for schedule(dynamic, 1) if (parallel)
    for (std::ptrdiff_t r = 0; r < count; ++r) {
        const auto i = static_cast<std::size_t>(r);
        try {
            runs[i] = refine(d, starts[i], cfg);
            runs[i].restart_index = static_cast<int>(r);
        } catch (...) {
            errors[i] = std::current_exception();
        }
    }
    for (const auto& e : errors) {
        if (e) {
            std::rethrow_exception(e);
        }
    }
    std::size_t best = 0;
    for (std::size_t i = 1; i < runs.size(); ++i) {
        if (runs[i].stress1 < runs[best].stress1) {
            best = i;
        }
    }
    return std::move(runs[best]);
}

std::vector<ScreeRow> scree(const DissimilarityMatrix& d, std::size_t max_dims,
                            const MdsConfig& cfg) {
    if (max_dims < 1 || max_dims >= d.size()) {
        throw ConfigError("scree: max dims must satisfy 1 <= k < n");
    }
    std::vector<ScreeRow> rows;
    Matrix previous;
    for (std::size_t dims = 1; dims <= max_dims; ++dims) {
        MdsConfig c = cfg;
        c.dims = dims;
        std::vector<Matrix> extra;
        if (dims > 1) {
            Matrix padded(d.size(), dims);
            for (std::size_t i = 0; i < d.size(); ++i) {
                for (std::size_t k = 0; k + 1 < dims; ++k) {
                    padded(i, k) = previous(i, k);
                }
            }
            extra.push_back(std::move(padded));
        }
        MdsSolution sol = nmds_fit(d, c, extra);
        previous = sol.coords;
        rows.push_back({dims, sol.stress1, sol.r_squared, std::move(sol)});
    }
    return rows;
}

Procrustes procrustes_align(const Matrix& x, const Matrix& y) {
    if (x.rows() != y.rows() || x.cols() != y.cols()) {
        throw ConfigError("procrustes_align: shapes differ");
    }
    const std::size_t n = x.rows();
    const std::size_t dims = x.cols();
    if (n < 2) {
        throw ConfigError("procrustes_align: need at least two points");
    }
    using Mat = Eigen::MatrixXd;
    Mat xe(n, dims), ye(n, dims);
    for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t c = 0; c < dims; ++c) {
            xe(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(c)) = x(i, c);
            ye(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(c)) = y(i, c);
        }
    }
    const Eigen::RowVectorXd xmean = xe.colwise().mean();
    const Mat xc = xe.rowwise() - xmean;
    const Mat yc = ye.rowwise() - ye.colwise().mean();

    const Mat m = yc.transpose() * xc;
    Eigen::JacobiSVD<Mat> svd(m, Eigen::ComputeFullU | Eigen::ComputeFullV);
    const Mat q = svd.matrixU() * svd.matrixV().transpose();
    const double ynorm2 = yc.squaredNorm();
    const double s = ynorm2 > 0.0 ? svd.singularValues().sum() / ynorm2 : 0.0;
    const Mat fitted = s * yc * q;
    const double xnorm = xc.norm();

    Procrustes out;
    out.scale = s;
    out.residual = xnorm > 0.0 ? (xc - fitted).norm() / xnorm : 0.0;
    out.aligned = Matrix(n, dims);
    out.rotation = Matrix(dims, dims);
    for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t c = 0; c < dims; ++c) {
            out.aligned(i, c) = fitted(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(c)) +
                                xmean(static_cast<Eigen::Index>(c));
        }
    }
    for (std::size_t r = 0; r < dims; ++r) {
        for (std::size_t c = 0; c < dims; ++c) {
            out.rotation(r, c) = q(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(c));
        }
    }
    return out;
}

}  // namespace timbre::mds
