#pragma once

// Readers and writers for the analysis artifacts exchanged between stages:
// features.csv, solution.json and scree.csv.

#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "json.hpp"
#include "timbre/descriptors.hpp"
#include "timbre/nmds.hpp"
#include "timbre/stats.hpp"

namespace timbre::artifacts {

struct FeatureTable {
    std::vector<std::string> ids;
    stats::FeatureColumns columns;  // header order

    const stats::NamedColumn& column(const std::string& name) const;
    // Columns reordered to match `ids_wanted` (ConfigError on a missing id).
    FeatureTable reordered(const std::vector<std::string>& ids_wanted) const;
};

std::string features_to_csv(const std::vector<std::string>& ids,
                            const std::vector<descriptors::DescriptorVector>& rows,
                            std::span<const std::string> comments = {});
FeatureTable features_from_csv(std::string_view text);
FeatureTable read_features_csv(const std::filesystem::path& path);

nlohmann::json to_json(const mds::MdsConfig& cfg);
mds::MdsConfig mds_config_from_json(const nlohmann::json& j);

nlohmann::json solution_to_json(const std::vector<std::string>& ids, const mds::MdsSolution& sol,
                                const mds::MdsConfig& cfg);

struct StoredSolution {
    std::vector<std::string> ids;
    Matrix coords;
    double stress1 = 0.0;
    double r_squared = 0.0;
};
StoredSolution solution_from_json(const nlohmann::json& j);
StoredSolution read_solution(const std::filesystem::path& path);

std::string scree_to_csv(std::span<const mds::ScreeRow> rows, std::span<const std::string> comments = {});

}  // namespace timbre::artifacts
