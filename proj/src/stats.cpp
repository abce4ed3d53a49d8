#include "timbre/stats.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <set>
#include <sstream>

#include "timbre/errors.hpp"
#include "timbre/io.hpp"

namespace timbre::stats {
namespace {

void check_pair(std::span<const double> x, std::span<const double> y) {
    if (x.size() != y.size()) {
        throw ConfigError("correlation: series lengths differ");
    }
    if (x.size() < 3) {
        throw ConfigError("correlation: need at least three observations");
    }
}

double beta_continued_fraction(double a, double b, double x) {
    constexpr int kMaxIter = 500;
    constexpr double kEps = 1e-15;
    constexpr double kTiny = 1e-300;
    const double qab = a + b;
    const double qap = a + 1.0;
    const double qam = a - 1.0;
    double c = 1.0;
    double d = 1.0 - qab * x / qap;
    if (std::abs(d) < kTiny) {
        d = kTiny;
    }
    d = 1.0 / d;
    double h = d;
    for (int m = 1; m <= kMaxIter; ++m) {
        const double m2 = 2.0 * m;
        double aa = m * (b - m) * x / ((qam + m2) * (a + m2));
        d = 1.0 + aa * d;
        if (std::abs(d) < kTiny) d = kTiny;
        c = 1.0 + aa / c;
        if (std::abs(c) < kTiny) c = kTiny;
        d = 1.0 / d;
        h *= d * c;
        aa = -(a + m) * (qab + m) * x / ((a + m2) * (qap + m2));
        d = 1.0 + aa * d;
        if (std::abs(d) < kTiny) d = kTiny;
        c = 1.0 + aa / c;
        if (std::abs(c) < kTiny) c = kTiny;
        d = 1.0 / d;
        const double delta = d * c;
        h *= delta;
        if (std::abs(delta - 1.0) < kEps) {
            break;
        }
    }
    return h;
}

}  // namespace

std::vector<double> average_ranks(std::span<const double> x) {
    const std::size_t n = x.size();
    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return x[a] < x[b]; });
    std::vector<double> ranks(n);
    std::size_t i = 0;
    while (i < n) {
        std::size_t j = i;
        while (j + 1 < n && x[order[j + 1]] == x[order[i]]) {
            ++j;
        }
        const double rank = (static_cast<double>(i + 1) + static_cast<double>(j + 1)) / 2.0;
        for (std::size_t k = i; k <= j; ++k) {
            ranks[order[k]] = rank;
        }
        i = j + 1;
    }
    return ranks;
}

double pearson(std::span<const double> x, std::span<const double> y) {
    check_pair(x, y);
    const double n = static_cast<double>(x.size());
    const double mx = std::accumulate(x.begin(), x.end(), 0.0) / n;
    const double my = std::accumulate(y.begin(), y.end(), 0.0) / n;
    double sxy = 0.0, sxx = 0.0, syy = 0.0;
    for (std::size_t i = 0; i < x.size(); ++i) {
        sxy += (x[i] - mx) * (y[i] - my);
        sxx += (x[i] - mx) * (x[i] - mx);
        syy += (y[i] - my) * (y[i] - my);
    }
    if (sxx <= 0.0 || syy <= 0.0) {
        throw ConfigError("correlation: constant input");
    }
    return std::clamp(sxy / std::sqrt(sxx * syy), -1.0, 1.0);
}

double spearman(std::span<const double> x, std::span<const double> y) {
    check_pair(x, y);
    const auto rx = average_ranks(x);
    const auto ry = average_ranks(y);
    return pearson(rx, ry);
}

double regularized_incomplete_beta(double a, double b, double x) {
    if (!(a > 0.0 && b > 0.0)) {
        throw std::domain_error("incomplete beta: a and b must be positive");
    }
    if (x <= 0.0) {
        return 0.0;
    }
    if (x >= 1.0) {
        return 1.0;
    }
    const double log_front = std::lgamma(a + b) - std::lgamma(a) - std::lgamma(b) +
                             a * std::log(x) + b * std::log1p(-x);
    const double front = std::exp(log_front);
    if (x < (a + 1.0) / (a + b + 2.0)) {
        return front * beta_continued_fraction(a, b, x) / a;
    }
    return 1.0 - front * beta_continued_fraction(b, a, 1.0 - x) / b;
}

double student_t_two_tailed(double t, double df) {
    if (!(df > 0.0)) {
        throw std::domain_error("student t: df must be positive");
    }
    if (std::isinf(t)) {
        return 0.0;
    }
    return regularized_incomplete_beta(df / 2.0, 0.5, df / (df + t * t));
}

double pearson_p_value(double r, std::size_t n) {
    if (n < 3) {
        throw ConfigError("pearson_p_value: need at least three observations");
    }
    if (std::abs(r) >= 1.0) {
        return 0.0;
    }
    const double df = static_cast<double>(n - 2);
    const double t = r * std::sqrt(df / (1.0 - r * r));
    return std::clamp(student_t_two_tailed(t, df), 0.0, 1.0);
}

PearsonTest pearson_test(std::span<const double> x, std::span<const double> y) {
    const double r = pearson(x, y);
    return {r, pearson_p_value(r, x.size())};
}

std::string significance_stars(double p) {
    if (p < 0.01) {
        return "**";
    }
    if (p < 0.05) {
        return "*";
    }
    return "";
}

std::vector<std::string> collinearity_filter(const FeatureColumns& features, double threshold,
                                             const std::vector<std::string>& priority) {
    if (features.size() < 2) {
        throw ConfigError("collinearity_filter: need at least two features");
    }
    std::vector<std::size_t> walk;
    std::vector<bool> covered(features.size(), false);
    for (const auto& name : priority) {
        for (std::size_t i = 0; i < features.size(); ++i) {
            if (features[i].name == name && !covered[i]) {
                covered[i] = true;
                walk.push_back(i);
                break;
            }
        }
    }
    for (std::size_t i = 0; i < features.size(); ++i) {
        if (!covered[i]) {
            throw ConfigError("collinearity_filter: priority list does not cover '" +
                              features[i].name + "'");
        }
    }
    std::vector<std::size_t> kept;
    for (std::size_t idx : walk) {
        bool ok = true;
        for (std::size_t k : kept) {
            if (std::abs(spearman(features[idx].values, features[k].values)) > threshold) {
                ok = false;
                break;
            }
        }
        if (ok) {
            kept.push_back(idx);
        }
    }
    std::vector<std::string> names;
    for (std::size_t k : kept) {
        names.push_back(features[k].name);
    }
    return names;
}

CorrelationReport correlation_table(const Matrix& coords, const FeatureColumns& descriptors) {
    const std::size_t n = coords.rows();
    if (n < 3) {
        throw ConfigError("correlation_table: need at least three stimuli");
    }
    CorrelationReport rep;
    rep.dims = coords.cols();
    rep.r = Matrix(descriptors.size(), rep.dims);
    rep.p = Matrix(descriptors.size(), rep.dims);
    for (std::size_t row = 0; row < descriptors.size(); ++row) {
        const auto& col = descriptors[row];
        if (col.values.size() != n) {
            throw ConfigError("correlation_table: descriptor '" + col.name + "' has the wrong length");
        }
        rep.rows.push_back(col.name);
        for (std::size_t d = 0; d < rep.dims; ++d) {
            std::vector<double> dim(n);
            for (std::size_t i = 0; i < n; ++i) {
                dim[i] = coords(i, d);
            }
            const auto t = pearson_test(col.values, dim);
            rep.r(row, d) = t.r;
            rep.p(row, d) = t.p;
        }
    }
    return rep;
}

std::string to_csv(const CorrelationReport& report, std::span<const std::string> comments) {
    std::ostringstream os;
    for (const auto& c : comments) {
        os << '#' << c << '\n';
    }
    os << "descriptor";
    for (std::size_t d = 1; d <= report.dims; ++d) {
        os << ",r_dim" << d << ",p_dim" << d << ",sig_dim" << d;
    }
    os << '\n';
    for (std::size_t row = 0; row < report.rows.size(); ++row) {
        os << report.rows[row];
        for (std::size_t d = 0; d < report.dims; ++d) {
            os << ',' << io::format_double(report.r(row, d)) << ','
               << io::format_double(report.p(row, d)) << ',' << report.stars(row, d);
        }
        os << '\n';
    }
    return os.str();
}

std::string Dendrogram::node_name(std::size_t node) const {
    return node < leaves.size() ? leaves[node] : merges[node - leaves.size()].name;
}

nlohmann::json Dendrogram::to_json() const {
    std::vector<nlohmann::json> nodes;
    for (const auto& leaf : leaves) {
        nodes.push_back({{"name", leaf}});
    }
    for (const auto& m : merges) {
        nodes.push_back({{"name", m.name},
                         {"height", m.height},
                         {"children", {nodes[m.left], nodes[m.right]}}});
    }
    return nodes.empty() ? nlohmann::json::object() : nodes.back();
}

Dendrogram feature_agglomeration(const FeatureColumns& features) {
    const std::size_t m = features.size();
    if (m < 2) {
        throw ConfigError("feature_agglomeration: need at least two features");
    }
    Dendrogram tree;
    for (const auto& f : features) {
        tree.leaves.push_back(f.name);
    }

    // Active clusters: node id, size and linkage distances to the others
    // (Lance-Williams update for average linkage).
    std::vector<std::size_t> node(m);
    std::vector<std::size_t> size(m, 1);
    std::iota(node.begin(), node.end(), 0);
    Matrix dist(m, m);
    for (std::size_t i = 0; i < m; ++i) {
        for (std::size_t j = i + 1; j < m; ++j) {
            const double d = 1.0 - std::abs(spearman(features[i].values, features[j].values));
            dist(i, j) = d;
            dist(j, i) = d;
        }
    }
    std::vector<bool> active(m, true);
    auto key = [&](std::size_t a, std::size_t b) {
        auto na = tree.node_name(node[a]);
        auto nb = tree.node_name(node[b]);
        return na < nb ? std::make_pair(na, nb) : std::make_pair(nb, na);
    };

    for (std::size_t step = 0; step + 1 < m; ++step) {
        std::size_t best_a = m, best_b = m;
        double best = std::numeric_limits<double>::infinity();
        for (std::size_t a = 0; a < m; ++a) {
            if (!active[a]) continue;
            for (std::size_t b = a + 1; b < m; ++b) {
                if (!active[b]) continue;
                if (dist(a, b) < best ||
                    (best_a < m && dist(a, b) == best && key(a, b) < key(best_a, best_b))) {
                    best = dist(a, b);
                    best_a = a;
                    best_b = b;
                }
            }
        }
        const auto [first, second] = key(best_a, best_b);
        const bool a_first = tree.node_name(node[best_a]) == first;
        const std::size_t left = a_first ? best_a : best_b;
        const std::size_t right = a_first ? best_b : best_a;
        tree.merges.push_back({node[left], node[right], best, first + "+" + second});

        // Merged cluster takes slot best_a.
        const double wa = static_cast<double>(size[best_a]);
        const double wb = static_cast<double>(size[best_b]);
        for (std::size_t c = 0; c < m; ++c) {
            if (!active[c] || c == best_a || c == best_b) continue;
            const double d = (wa * dist(best_a, c) + wb * dist(best_b, c)) / (wa + wb);
            dist(best_a, c) = d;
            dist(c, best_a) = d;
        }
        size[best_a] += size[best_b];
        node[best_a] = m + step;
        active[best_b] = false;
    }
    return tree;
}

}  // namespace timbre::stats
