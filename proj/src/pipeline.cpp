#include "timbre/pipeline.hpp"

#include <algorithm>
#include <chrono>
#include <cstdio>
#include <functional>

#include "timbre/errors.hpp"
#include "timbre/io.hpp"
#include "timbre/wav.hpp"

namespace timbre::pipeline {

using nlohmann::json;

mds::MdsConfig PipelineConfig::default_mds() {
    mds::MdsConfig m;
    m.dims = 4;
    return m;
}

std::vector<std::string> PipelineConfig::default_priority() {
    const auto& names = descriptors::DescriptorVector::names();
    return {names.begin(), names.end()};
}

namespace {

kernels::Execution parse_exec(const std::string& s) {
    if (s == "serial") {
        return kernels::Execution::serial;
    }
    if (s == "parallel") {
        return kernels::Execution::parallel;
    }
    throw ConfigError("config: execution must be 'serial' or 'parallel'");
}

fs::path resolve(const fs::path& p, const fs::path& base) {
    return p.is_absolute() || base.empty() ? p : base / p;
}

std::uint64_t fnv1a(std::string_view s) {
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (unsigned char c : s) {
        h ^= c;
        h *= 0x100000001b3ULL;
    }
    return h;
}

std::string hex64(std::uint64_t v) {
    char buf[17];
    std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(v));
    return buf;
}

}  // namespace

PipelineConfig config_from_json(const json& j, const fs::path& base_dir) {
    if (!j.is_object()) {
        throw ConfigError("config: expected a JSON object");
    }
    PipelineConfig cfg;
    try {
        if (j.contains("bank")) {
            cfg.bank = resolve(j.at("bank").get<std::string>(), base_dir);
        }
        if (j.contains("ratings")) {
            cfg.ratings = resolve(j.at("ratings").get<std::string>(), base_dir);
        }
        if (j.contains("out")) {
            cfg.out = resolve(j.at("out").get<std::string>(), base_dir);
        }
        if (j.contains("seed")) {
            cfg.seed = j.at("seed").get<std::uint64_t>();
        }
        if (j.contains("mds")) {
            cfg.mds = artifacts::mds_config_from_json(j.at("mds"));
            if (!j.at("mds").contains("dims")) {
                cfg.mds.dims = 4;
            }
        }
        cfg.scree_max_dims = j.value("scree_max_dims", cfg.scree_max_dims);
        cfg.collinearity_threshold = j.value("collinearity_threshold", cfg.collinearity_threshold);
        if (j.contains("priority")) {
            cfg.priority = j.at("priority").get<std::vector<std::string>>();
        }
        if (j.contains("exclusion")) {
            const auto& e = j.at("exclusion");
            cfg.exclusion.max_control_violations =
                e.value("max_control_violations", cfg.exclusion.max_control_violations);
            cfg.exclusion.control_rating = e.value("control_rating", cfg.exclusion.control_rating);
        }
        if (j.contains("features")) {
            const auto& f = j.at("features");
            auto& o = cfg.extract;
            o.rolloff_fraction = f.value("rolloff_fraction", o.rolloff_fraction);
            o.complexity_threshold = f.value("complexity_threshold", o.complexity_threshold);
            o.harmonic_tolerance = f.value("harmonic_tolerance", o.harmonic_tolerance);
            o.interpolate_harmonic_peaks = f.value("interpolate_harmonic_peaks", o.interpolate_harmonic_peaks);
            o.normalized_flux = f.value("normalized_flux", o.normalized_flux);
            o.odd_even_energy = f.value("odd_even_energy", o.odd_even_energy);
        }
        if (j.contains("execution")) {
            cfg.exec = parse_exec(j.at("execution").get<std::string>());
        }
    } catch (const json::exception& e) {
        throw ConfigError(std::string("config: ") + e.what());
    }
    return cfg;
}

PipelineConfig load_config(const fs::path& path) {
    json j;
    try {
        j = json::parse(io::read_text(path));
    } catch (const json::parse_error& e) {
        throw ConfigError("config " + path.string() + ": " + e.what());
    }
    return config_from_json(j, path.parent_path());
}

json to_json(const PipelineConfig& cfg) {
    json j = {{"bank", cfg.bank.filename().string()},
              {"ratings", cfg.ratings.filename().string()},
              {"mds", artifacts::to_json(cfg.mds)},
              {"scree_max_dims", cfg.scree_max_dims},
              {"collinearity_threshold", cfg.collinearity_threshold},
              {"priority", cfg.priority},
              {"exclusion",
               {{"max_control_violations", cfg.exclusion.max_control_violations},
                {"control_rating", cfg.exclusion.control_rating}}},
              {"features",
               {{"rolloff_fraction", cfg.extract.rolloff_fraction},
                {"complexity_threshold", cfg.extract.complexity_threshold},
                {"harmonic_tolerance", cfg.extract.harmonic_tolerance},
                {"interpolate_harmonic_peaks", cfg.extract.interpolate_harmonic_peaks},
                {"normalized_flux", cfg.extract.normalized_flux},
                {"odd_even_energy", cfg.extract.odd_even_energy}}}};
    if (cfg.seed) {
        j["seed"] = *cfg.seed;
    }
    return j;
}

std::string config_hash(const PipelineConfig& cfg) { return hex64(fnv1a(to_json(cfg).dump())); }

void validate(const PipelineConfig& cfg) {
    if (!cfg.seed) {
        throw ConfigError("config: seed is mandatory");
    }
    if (cfg.bank.empty() || !fs::exists(cfg.bank)) {
        throw ConfigError("config: bank file not found: " + cfg.bank.string());
    }
    if (cfg.out.empty()) {
        throw ConfigError("config: output directory not set");
    }
    if (cfg.mds.dims < 1 || cfg.mds.restarts < 1 || cfg.mds.max_iters < 1) {
        throw ConfigError("config: mds dims, restarts and max_iters must be >= 1");
    }
    if (cfg.scree_max_dims < cfg.mds.dims) {
        throw ConfigError("config: scree_max_dims must cover the fitted dimensionality");
    }
    if (!(cfg.collinearity_threshold > 0.0 && cfg.collinearity_threshold <= 1.0)) {
        throw ConfigError("config: collinearity_threshold must be in (0, 1]");
    }
}

StageError::StageError(std::string stage, const std::string& cause)
    : std::runtime_error("stage " + stage + " failed: " + cause), stage_(std::move(stage)),
      cause_(cause) {}

std::vector<std::string> stamp_comments(const PipelineConfig& cfg) {
    return {"config_hash=" + config_hash(cfg), "seed=" + std::to_string(cfg.seed.value_or(0))};
}

stats::FeatureColumns FeatureSet::columns() const {
    stats::FeatureColumns cols;
    const auto& names = descriptors::DescriptorVector::names();
    for (std::size_t k = 0; k < names.size(); ++k) {
        stats::NamedColumn c{std::string(names[k]), {}};
        for (const auto& r : rows) {
            c.values.push_back(r.values()[k]);
        }
        cols.push_back(std::move(c));
    }
    return cols;
}

FeatureSet extract_features(const fs::path& stimulus_dir, const descriptors::ExtractOptions& opts,
                            kernels::Execution exec) {
    FeatureSet out;
    for (const auto& entry : read_manifest(stimulus_dir)) {
        out.ids.push_back(entry.id);
        out.rows.push_back(descriptors::extract(read_wav(stimulus_dir / entry.file), opts, exec));
    }
    return out;
}

std::vector<std::string> drop_constant(stats::FeatureColumns& columns) {
    std::vector<std::string> dropped;
    std::erase_if(columns, [&](const stats::NamedColumn& c) {
        const bool constant = std::all_of(c.values.begin(), c.values.end(),
                                          [&](double v) { return v == c.values.front(); });
        if (constant) {
            dropped.push_back(c.name);
        }
        return constant;
    });
    return dropped;
}

Analysis analyze(const Matrix& coords, const stats::FeatureColumns& features, double threshold,
                 const std::vector<std::string>& priority) {
    Analysis a;
    stats::FeatureColumns usable = features;
    a.dropped_constant = drop_constant(usable);
    std::vector<std::string> order;
    for (const auto& name : priority) {
        if (std::find(a.dropped_constant.begin(), a.dropped_constant.end(), name) ==
            a.dropped_constant.end()) {
            order.push_back(name);
        }
    }
    a.retained = stats::collinearity_filter(usable, threshold, order);
    stats::FeatureColumns kept;
    for (const auto& name : a.retained) {
        kept.push_back(*std::find_if(usable.begin(), usable.end(),
                                     [&](const auto& c) { return c.name == name; }));
    }
    a.table = stats::correlation_table(coords, kept);
    a.tree = stats::feature_agglomeration(usable);
    return a;
}

namespace {

std::int64_t now_ms() {
    return std::chrono::duration_cast<std::chrono::milliseconds>(
               std::chrono::system_clock::now().time_since_epoch())
        .count();
}

template <typename F>
auto stage(const char* name, const fs::path& out, F&& body) -> decltype(body()) {
    try {
        return body();
    } catch (const StageError&) {
        throw;
    } catch (const std::exception& e) {
        std::error_code ec;
        fs::create_directories(out, ec);
        io::write_text(out / "FAILED", std::string("stage=") + name + "\ncause=" + e.what() + "\n");
        throw StageError(name, e.what());
    }
}

}  // namespace

Bundle run_full(const PipelineConfig& cfg) {
    const std::int64_t started = now_ms();
    Bundle b;
    b.dir = cfg.out;
    stage("config", cfg.out, [&] {
        validate(cfg);
        fs::create_directories(cfg.out);
        fs::remove(cfg.out / "FAILED");
        return 0;
    });
    const std::string hash = config_hash(cfg);
    const std::uint64_t seed = *cfg.seed;
    const auto comments = stamp_comments(cfg);
    const json stamp = {{"config_hash", hash}, {"seed", seed}};
    auto write = [&](const char* name, const std::string& text) {
        io::write_text(cfg.out / name, text);
    };

    const fs::path stimuli = cfg.out / "stimuli";
    const StimulusBank bank = stage("synth", cfg.out, [&] {
        StimulusBank bk = load_bank(cfg.bank);
        render_bank(bk, stimuli, stamp);
        return bk;
    });
    const std::vector<std::string> ids = bank.ids();

    b.features = stage("features", cfg.out, [&] {
        FeatureSet fs_ = extract_features(stimuli, cfg.extract, cfg.exec);
        write("features.csv", artifacts::features_to_csv(fs_.ids, fs_.rows, comments));
        return fs_;
    });

    b.ratings = stage("ratings", cfg.out, [&] {
        if (cfg.ratings.empty() || !fs::exists(cfg.ratings)) {
            throw ConfigError("ratings file not found: " + cfg.ratings.string());
        }
        const auto records = ratings::read_jsonl(cfg.ratings);
        ratings::Aggregate agg = ratings::aggregate(records, ids, cfg.exclusion);
        auto mc = comments;
        mc.push_back("participants_included=" + std::to_string(agg.included) + "/" +
                     std::to_string(agg.participants.size()));
        write("matrix.csv", ratings::to_csv(agg.matrix, mc));
        return agg;
    });

    stage("mds", cfg.out, [&] {
        mds::MdsConfig mc = cfg.mds;
        mc.seed = seed;
        mc.exec = cfg.exec;
        if (cfg.scree_max_dims >= ids.size()) {
            throw ConfigError("scree_max_dims must be below the stimulus count");
        }
        b.scree = mds::scree(b.ratings.matrix, cfg.scree_max_dims, mc);
        write("scree.csv", artifacts::scree_to_csv(b.scree, comments));
        b.solution = b.scree.at(cfg.mds.dims - 1).solution;
        mc.dims = cfg.mds.dims;
        json sol = artifacts::solution_to_json(ids, b.solution, mc);
        sol["stamp"] = stamp;
        write("solution.json", sol.dump(2) + "\n");
        return 0;
    });

    stage("analyze", cfg.out, [&] {
        const auto table = artifacts::FeatureTable{b.features.ids, b.features.columns()}.reordered(ids);
        b.analysis = analyze(b.solution.coords, table.columns, cfg.collinearity_threshold, cfg.priority);
        auto tc = comments;
        std::string dropped;
        for (const auto& d : b.analysis.dropped_constant) {
            dropped += (dropped.empty() ? "" : ";") + d;
        }
        tc.push_back("dropped_constant=" + dropped);
        write("table.csv", stats::to_csv(b.analysis.table, tc));
        json tree = b.analysis.tree.to_json();
        json wrapped = {{"format", "timbre-dendrogram"},
                        {"distance", "1-|spearman|"},
                        {"linkage", "average"},
                        {"stamp", stamp},
                        {"root", tree}};
        write("tree.json", wrapped.dump(2) + "\n");
        return 0;
    });

    for (const char* name : kArtifactNames) {
        b.artifacts.push_back(cfg.out / name);
    }
    json manifest = {{"format", "timbre-run-manifest"},
                     {"config", to_json(cfg)},
                     {"config_hash", hash},
                     {"seed", seed},
                     {"started_at_unix_ms", started},
                     {"finished_at_unix_ms", now_ms()},
                     {"stimuli_dir", "stimuli"},
                     {"participants_included", b.ratings.included},
                     {"participants_total", b.ratings.participants.size()},
                     {"retained_features", b.analysis.retained},
                     {"artifacts", json::array()}};
    for (std::size_t k = 1; k < std::size(kArtifactNames); ++k) {
        const std::string text = io::read_text(cfg.out / kArtifactNames[k]);
        manifest["artifacts"].push_back(
            {{"file", kArtifactNames[k]}, {"bytes", text.size()}, {"fnv1a64", hex64(fnv1a(text))}});
    }
    write("manifest.json", manifest.dump(2) + "\n");
    return b;
}

}  // namespace timbre::pipeline
