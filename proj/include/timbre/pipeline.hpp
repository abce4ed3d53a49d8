#pragma once

// End-to-end orchestration: render -> features -> ratings -> scaling ->
// analysis. Each stage is also exposed on its own for the CLI subcommands.

#include <cstdint>
#include <filesystem>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "json.hpp"
#include "timbre/artifacts.hpp"
#include "timbre/bank.hpp"
#include "timbre/descriptors.hpp"
#include "timbre/nmds.hpp"
#include "timbre/ratings.hpp"
#include "timbre/stats.hpp"

namespace timbre::pipeline {

namespace fs = std::filesystem;

struct PipelineConfig {
    fs::path bank;
    fs::path ratings;
    fs::path out;
    std::optional<std::uint64_t> seed;  // mandatory by the time run_full starts
    mds::MdsConfig mds = default_mds();
    std::size_t scree_max_dims = 6;
    double collinearity_threshold = 0.8;
    std::vector<std::string> priority = default_priority();
    ratings::ExclusionPolicy exclusion;
    descriptors::ExtractOptions extract;
    kernels::Execution exec = kernels::Execution::parallel;

    static mds::MdsConfig default_mds();
    static std::vector<std::string> default_priority();
};

// Relative paths resolve against base_dir. Throws ConfigError.
PipelineConfig config_from_json(const nlohmann::json& j, const fs::path& base_dir = {});
PipelineConfig load_config(const fs::path& path);
// Everything that influences the artifacts; excludes exec and the output dir.
nlohmann::json to_json(const PipelineConfig& cfg);
// FNV-1a 64 of to_json(cfg).dump(), 16 hex digits.
std::string config_hash(const PipelineConfig& cfg);
void validate(const PipelineConfig& cfg);

class StageError : public std::runtime_error {
public:
    StageError(std::string stage, const std::string& cause);
    const std::string& stage() const noexcept { return stage_; }
    const std::string& cause() const noexcept { return cause_; }

private:
    std::string stage_;
    std::string cause_;
};

struct FeatureSet {
    std::vector<std::string> ids;
    std::vector<descriptors::DescriptorVector> rows;

    stats::FeatureColumns columns() const;
};

// Reads <dir>/manifest.json and extracts descriptors from every listed WAV.
FeatureSet extract_features(const fs::path& stimulus_dir, const descriptors::ExtractOptions& opts = {},
                            kernels::Execution exec = kernels::Execution::parallel);

// Removes zero-variance columns in place and returns their names.
std::vector<std::string> drop_constant(stats::FeatureColumns& columns);

struct Analysis {
    std::vector<std::string> dropped_constant;
    std::vector<std::string> retained;
    stats::CorrelationReport table;
    stats::Dendrogram tree;
};

// Constant columns are dropped (they have no rank order), the rest go
// through collinearity_filter in priority order. The dendrogram covers every
// non-constant column.
Analysis analyze(const Matrix& coords, const stats::FeatureColumns& features, double threshold,
                 const std::vector<std::string>& priority);

struct Bundle {
    fs::path dir;
    std::vector<fs::path> artifacts;  // manifest first
    ratings::Aggregate ratings;
    FeatureSet features;
    std::vector<mds::ScreeRow> scree;
    mds::MdsSolution solution;
    Analysis analysis;
};

inline constexpr const char* kArtifactNames[] = {"manifest.json", "matrix.csv",    "features.csv",
                                                 "scree.csv",     "solution.json", "table.csv",
                                                 "tree.json"};

// Throws StageError after writing <out>/FAILED (stage and cause); outputs of
// earlier stages are left in place.
Bundle run_full(const PipelineConfig& cfg);

// "config_hash=<h>", "seed=<s>" comment lines for CSV artifacts.
std::vector<std::string> stamp_comments(const PipelineConfig& cfg);

}  // namespace timbre::pipeline
