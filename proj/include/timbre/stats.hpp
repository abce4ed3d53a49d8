#pragma once

// Correlation machinery: Spearman collinearity screening, Pearson
// significance tables and average-linkage feature agglomeration.

#include <span>
#include <string>
#include <vector>

#include "json.hpp"
#include "timbre/matrix.hpp"

namespace timbre::stats {

// Ranks starting at 1; tied values share the mean of their ranks.
std::vector<double> average_ranks(std::span<const double> x);

// Sample Pearson r. Throws ConfigError for length < 3, mismatched lengths or
// a constant input.
double pearson(std::span<const double> x, std::span<const double> y);
double spearman(std::span<const double> x, std::span<const double> y);

// I_x(a, b) by Lentz's continued fraction.
double regularized_incomplete_beta(double a, double b, double x);

// Two-tailed Student-t tail probability P(|T| >= |t|).
double student_t_two_tailed(double t, double df);

struct PearsonTest {
    double r = 0.0;
    double p = 1.0;
};

PearsonTest pearson_test(std::span<const double> x, std::span<const double> y);
// p-value of a given r with n observations (df = n - 2).
double pearson_p_value(double r, std::size_t n);

// "**" for p < .01, "*" for p < .05, "" otherwise.
std::string significance_stars(double p);

struct NamedColumn {
    std::string name;
    std::vector<double> values;
};
using FeatureColumns = std::vector<NamedColumn>;

// Walks `priority` and keeps a feature iff |Spearman r| <= threshold
// against every feature kept so far. Throws ConfigError if priority does not
// name every feature.
std::vector<std::string> collinearity_filter(const FeatureColumns& features, double threshold,
                                             const std::vector<std::string>& priority);

struct CorrelationReport {
    std::vector<std::string> rows;  // descriptor names
    std::size_t dims = 0;
    Matrix r;  // rows x dims
    Matrix p;

    std::string stars(std::size_t row, std::size_t dim) const { return significance_stars(p(row, dim)); }
};

// Pearson test of every descriptor against every coordinate column.
CorrelationReport correlation_table(const Matrix& coords, const FeatureColumns& descriptors);

std::string to_csv(const CorrelationReport& report, std::span<const std::string> comments = {});

struct Merge {
    std::size_t left = 0;   // node ids: leaves 0..m-1, merge k is node m+k
    std::size_t right = 0;
    double height = 0.0;
    std::string name;       // "<left>+<right>" of the merged clusters' names
};

struct Dendrogram {
    std::vector<std::string> leaves;
    std::vector<Merge> merges;

    std::string node_name(std::size_t node) const;
    // {"name", "height", "children": [...]} with leaves as {"name"}.
    nlohmann::json to_json() const;
};

// Average linkage on 1 - |Spearman r|. Ties in linkage distance are broken by
// the lexicographically smallest (min name, max name) cluster pair.
Dendrogram feature_agglomeration(const FeatureColumns& features);

}  // namespace timbre::stats
