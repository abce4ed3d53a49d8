#include "timbre/artifacts.hpp"

#include <sstream>

#include "timbre/errors.hpp"
#include "timbre/io.hpp"

namespace timbre::artifacts {

using nlohmann::json;

const stats::NamedColumn& FeatureTable::column(const std::string& name) const {
    for (const auto& c : columns) {
        if (c.name == name) {
            return c;
        }
    }
    throw ConfigError("features: no column '" + name + "'");
}

FeatureTable FeatureTable::reordered(const std::vector<std::string>& ids_wanted) const {
    std::vector<std::size_t> rows;
    for (const auto& id : ids_wanted) {
        const auto it = std::find(ids.begin(), ids.end(), id);
        if (it == ids.end()) {
            throw ConfigError("features: no row for stimulus '" + id + "'");
        }
        rows.push_back(static_cast<std::size_t>(it - ids.begin()));
    }
    FeatureTable out{ids_wanted, {}};
    for (const auto& c : columns) {
        stats::NamedColumn nc{c.name, {}};
        for (std::size_t r : rows) {
            nc.values.push_back(c.values[r]);
        }
        out.columns.push_back(std::move(nc));
    }
    return out;
}

std::string features_to_csv(const std::vector<std::string>& ids,
                            const std::vector<descriptors::DescriptorVector>& rows,
                            std::span<const std::string> comments) {
    std::ostringstream os;
    for (const auto& c : comments) {
        os << '#' << c << '\n';
    }
    os << "id";
    for (auto name : descriptors::DescriptorVector::names()) {
        os << ',' << name;
    }
    os << '\n';
    for (std::size_t i = 0; i < rows.size(); ++i) {
        os << ids.at(i);
        for (double v : rows[i].values()) {
            os << ',' << io::format_double(v);
        }
        os << '\n';
    }
    return os.str();
}

FeatureTable features_from_csv(std::string_view text) {
    const auto table = io::parse_csv(text);
    if (table.header.empty() || table.header[0] != "id") {
        throw ParseError("features csv: first column must be 'id'", 0);
    }
    FeatureTable out;
    for (std::size_t c = 1; c < table.header.size(); ++c) {
        out.columns.push_back({table.header[c], {}});
    }
    for (std::size_t r = 0; r < table.rows.size(); ++r) {
        out.ids.push_back(table.rows[r][0]);
        for (std::size_t c = 1; c < table.header.size(); ++c) {
            out.columns[c - 1].values.push_back(io::parse_double(table.rows[r][c], r + 1));
        }
    }
    return out;
}

FeatureTable read_features_csv(const std::filesystem::path& path) {
    return features_from_csv(io::read_text(path));
}

json to_json(const mds::MdsConfig& cfg) {
    return {{"dims", cfg.dims},
            {"max_iters", cfg.max_iters},
            {"stress_tol", cfg.stress_tol},
            {"restarts", cfg.restarts},
            {"seed", cfg.seed},
            {"r_squared", cfg.r_squared == mds::RSquaredConvention::dissimilarity_vs_disparity
                              ? "dissimilarity_vs_disparity"
                              : "disparity_vs_distance"}};
}

mds::MdsConfig mds_config_from_json(const json& j) {
    mds::MdsConfig cfg;
    try {
        cfg.dims = j.value("dims", cfg.dims);
        cfg.max_iters = j.value("max_iters", cfg.max_iters);
        cfg.stress_tol = j.value("stress_tol", cfg.stress_tol);
        cfg.restarts = j.value("restarts", cfg.restarts);
        cfg.seed = j.value("seed", cfg.seed);
        const auto conv = j.value("r_squared", std::string("dissimilarity_vs_disparity"));
        if (conv == "dissimilarity_vs_disparity") {
            cfg.r_squared = mds::RSquaredConvention::dissimilarity_vs_disparity;
        } else if (conv == "disparity_vs_distance") {
            cfg.r_squared = mds::RSquaredConvention::disparity_vs_distance;
        } else {
            throw ConfigError("mds config: unknown r_squared convention '" + conv + "'");
        }
    } catch (const json::exception& e) {
        throw ConfigError(std::string("mds config: ") + e.what());
    }
    return cfg;
}

json solution_to_json(const std::vector<std::string>& ids, const mds::MdsSolution& sol,
                      const mds::MdsConfig& cfg) {
    json coords = json::array();
    for (std::size_t i = 0; i < sol.coords.rows(); ++i) {
        json row = json::array();
        for (double v : sol.coords.row(i)) {
            row.push_back(v);
        }
        coords.push_back(row);
    }
    return {{"format", "timbre-mds-solution"},
            {"ids", ids},
            {"dims", sol.coords.cols()},
            {"coords", coords},
            {"stress1", sol.stress1},
            {"r_squared", sol.r_squared},
            {"r_squared_alternate", sol.r_squared_alternate},
            {"disparities", sol.disparities},
            {"distances", sol.distances},
            {"iterations_used", sol.iterations_used},
            {"restart_index", sol.restart_index},
            {"config", to_json(cfg)}};
}

StoredSolution solution_from_json(const json& j) {
    StoredSolution s;
    try {
        s.ids = j.at("ids").get<std::vector<std::string>>();
        const auto& coords = j.at("coords");
        const std::size_t dims = j.at("dims").get<std::size_t>();
        if (coords.size() != s.ids.size()) {
            throw ConfigError("solution: coords/ids length mismatch");
        }
        s.coords = Matrix(s.ids.size(), dims);
        for (std::size_t i = 0; i < s.ids.size(); ++i) {
            if (coords[i].size() != dims) {
                throw ConfigError("solution: ragged coordinate row");
            }
            for (std::size_t c = 0; c < dims; ++c) {
                s.coords(i, c) = coords[i][c].get<double>();
            }
        }
        s.stress1 = j.at("stress1").get<double>();
        s.r_squared = j.at("r_squared").get<double>();
    } catch (const json::exception& e) {
        throw ConfigError(std::string("solution: ") + e.what());
    }
    return s;
}

StoredSolution read_solution(const std::filesystem::path& path) {
    try {
        return solution_from_json(json::parse(io::read_text(path)));
    } catch (const json::parse_error& e) {
        throw ParseError(std::string("solution: ") + e.what(), e.byte);
    }
}

std::string scree_to_csv(std::span<const mds::ScreeRow> rows, std::span<const std::string> comments) {
    std::ostringstream os;
    for (const auto& c : comments) {
        os << '#' << c << '\n';
    }
    os << "dims,stress1,r_squared\n";
    for (const auto& r : rows) {
        os << r.dims << ',' << io::format_double(r.stress1) << ',' << io::format_double(r.r_squared)
           << '\n';
    }
    return os.str();
}

}  // namespace timbre::artifacts
