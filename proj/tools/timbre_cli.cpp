// timbre: command-line front end for the timbre-space pipeline.
//
// Exit codes: 0 success, 2 configuration error, 3 stage failure.

#include <cstdint>
#include <filesystem>
#include <iostream>
#include <optional>
#include <string>

#include "CLI11.hpp"
#include "timbre/artifacts.hpp"
#include "timbre/bank.hpp"
#include "timbre/errors.hpp"
#include "timbre/io.hpp"
#include "timbre/pipeline.hpp"
#include "timbre/rng.hpp"
#include "timbre/simulate.hpp"

namespace fs = std::filesystem;
using namespace timbre;
using nlohmann::json;

namespace {

constexpr int kExitConfig = 2;
constexpr int kExitStage = 3;

struct Globals {
    std::optional<std::uint64_t> seed;
    std::string config;
    std::string out;
};

pipeline::PipelineConfig base_config(const Globals& g) {
    pipeline::PipelineConfig cfg = g.config.empty() ? pipeline::PipelineConfig{} : pipeline::load_config(g.config);
    if (g.seed) {
        cfg.seed = g.seed;
    }
    if (!g.out.empty()) {
        cfg.out = g.out;
    }
    return cfg;
}

std::uint64_t require_seed(const pipeline::PipelineConfig& cfg) {
    if (!cfg.seed) {
        throw ConfigError("--seed is required (or set \"seed\" in --config)");
    }
    return *cfg.seed;
}

fs::path require_out(const Globals& g, const char* what) {
    if (g.out.empty()) {
        throw ConfigError(std::string("--out is required for ") + what);
    }
    return g.out;
}

std::vector<std::string> stamp(const pipeline::PipelineConfig& cfg) {
    std::vector<std::string> c;
    if (cfg.seed) {
        c.push_back("seed=" + std::to_string(*cfg.seed));
    }
    return c;
}

// Stimulus ids from a bank JSON file or a rendered stimulus directory.
std::vector<std::string> stimulus_ids(const fs::path& p) {
    if (fs::is_directory(p)) {
        std::vector<std::string> ids;
        for (const auto& e : read_manifest(p)) {
            ids.push_back(e.id);
        }
        return ids;
    }
    return load_bank(p).ids();
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Timbre-space laboratory: render, describe, scale and analyse"};
    app.require_subcommand(1);
    Globals g;
    app.add_option("--seed", g.seed, "Random seed (mandatory for stochastic stages)");
    app.add_option("--config", g.config, "Pipeline config JSON");
    app.add_option("--out", g.out, "Output file or directory");

    auto* synth = app.add_subcommand("synth", "Stimulus rendering")->require_subcommand(1);
    auto* render = synth->add_subcommand("render", "Render a stimulus bank to WAV files");
    std::string bank_path;
    render->add_option("--bank", bank_path, "Bank JSON")->required();

    auto* features = app.add_subcommand("features", "Descriptor extraction")->require_subcommand(1);
    auto* extract = features->add_subcommand("extract", "Extract descriptors from rendered stimuli");
    std::string stim_dir;
    extract->add_option("--bank", stim_dir, "Rendered stimulus directory")->required();

    auto* ratings_cmd = app.add_subcommand("ratings", "Rating data")->require_subcommand(1);
    auto* aggregate = ratings_cmd->add_subcommand("aggregate", "Exclusions and mean dissimilarity matrix");
    std::string ratings_path, ids_from;
    aggregate->add_option("--ratings", ratings_path, "Ratings JSONL")->required();
    aggregate->add_option("--bank", ids_from, "Bank JSON or rendered stimulus directory")->required();

    auto* mds_cmd = app.add_subcommand("mds", "Non-metric MDS")->require_subcommand(1);
    auto* fit = mds_cmd->add_subcommand("fit", "Fit one dimensionality");
    auto* scree_cmd = mds_cmd->add_subcommand("scree", "Stress-1 and R^2 over dims 1..k");
    std::string matrix_path;
    std::optional<std::size_t> dims, max_dims;
    std::optional<int> restarts;
    for (auto* c : {fit, scree_cmd}) {
        c->add_option("--matrix", matrix_path, "Dissimilarity matrix CSV")->required();
        c->add_option("--restarts", restarts, "Restarts per fit");
    }
    fit->add_option("--dims", dims, "Dimensionality");
    scree_cmd->add_option("--max-dims", max_dims, "Largest dimensionality");

    auto* analyze = app.add_subcommand("analyze", "Descriptor analysis")->require_subcommand(1);
    auto* correlate = analyze->add_subcommand("correlate", "Pearson table of descriptors vs dimensions");
    auto* dendro = analyze->add_subcommand("dendrogram", "Feature agglomeration tree");
    std::string coords_path, features_path;
    std::optional<double> threshold;
    correlate->add_option("--coords", coords_path, "solution.json")->required();
    for (auto* c : {correlate, dendro}) {
        c->add_option("--features", features_path, "features.csv")->required();
    }
    correlate->add_option("--threshold", threshold, "Collinearity threshold on |Spearman r|");

    auto* simulate_cmd = app.add_subcommand("simulate", "Simulated raters")->require_subcommand(1);
    auto* sim_ratings = simulate_cmd->add_subcommand("ratings", "Write a simulated ratings JSONL");
    std::string sim_ids, latent = "planted", sim_features;
    simulate::SimulatedRaterSpec spec;
    std::size_t latent_dims = 4;
    sim_ratings->add_option("--bank", sim_ids, "Bank JSON or rendered stimulus directory")->required();
    sim_ratings->add_option("--participants", spec.participants, "Participant count");
    sim_ratings->add_option("--sigma", spec.sigma, "Rating noise (scale points)");
    sim_ratings->add_option("--latent", latent, "planted | descriptors")
        ->check(CLI::IsMember({"planted", "descriptors"}));
    sim_ratings->add_option("--dims", latent_dims, "Planted dimensionality");
    sim_ratings->add_option("--features", sim_features, "features.csv for --latent descriptors");

    auto* run = app.add_subcommand("run", "Full pipeline");
    std::string run_bank, run_ratings;
    run->add_option("--bank", run_bank, "Bank JSON (overrides config)");
    run->add_option("--ratings", run_ratings, "Ratings JSONL (overrides config)");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : kExitConfig;
    }

    try {
        pipeline::PipelineConfig cfg = base_config(g);
        if (render->parsed()) {
            const fs::path out = require_out(g, "synth render");
            const auto entries = render_bank(load_bank(bank_path), out);
            std::cout << "rendered " << entries.size() << " stimuli to " << out << "\n";
        } else if (extract->parsed()) {
            const fs::path out = require_out(g, "features extract");
            const auto set = pipeline::extract_features(stim_dir, cfg.extract, cfg.exec);
            io::write_text(out, artifacts::features_to_csv(set.ids, set.rows, stamp(cfg)));
        } else if (aggregate->parsed()) {
            const fs::path out = require_out(g, "ratings aggregate");
            const auto agg = ratings::aggregate(ratings::read_jsonl(ratings_path), stimulus_ids(ids_from),
                                                cfg.exclusion);
            for (const auto& p : agg.participants) {
                if (!p.exclusion.included()) {
                    std::cerr << "excluded " << p.participant_id << ": "
                              << ratings::to_string(p.exclusion.reason) << " (" << p.exclusion.detail << ")\n";
                }
            }
            auto c = stamp(cfg);
            c.push_back("participants_included=" + std::to_string(agg.included) + "/" +
                        std::to_string(agg.participants.size()));
            io::write_text(out, ratings::to_csv(agg.matrix, c));
        } else if (fit->parsed() || scree_cmd->parsed()) {
            const fs::path out = require_out(g, "mds");
            const auto m = ratings::read_matrix_csv(matrix_path);
            mds::MdsConfig mc = cfg.mds;
            mc.seed = require_seed(cfg);
            mc.exec = cfg.exec;
            if (restarts) {
                mc.restarts = *restarts;
            }
            if (fit->parsed()) {
                if (dims) {
                    mc.dims = *dims;
                }
                const auto sol = mds::nmds_fit(m, mc);
                json j = artifacts::solution_to_json(m.ids, sol, mc);
                j["stamp"] = {{"seed", mc.seed}};
                io::write_text(out, j.dump(2) + "\n");
                std::cout << "stress1=" << sol.stress1 << " r_squared=" << sol.r_squared << "\n";
            } else {
                const auto rows = mds::scree(m, max_dims.value_or(cfg.scree_max_dims), mc);
                io::write_text(out, artifacts::scree_to_csv(rows, stamp(cfg)));
            }
        } else if (correlate->parsed() || dendro->parsed()) {
            const fs::path out = require_out(g, "analyze");
            const auto table = artifacts::read_features_csv(features_path);
            if (correlate->parsed()) {
                const auto sol = artifacts::read_solution(coords_path);
                const auto ordered = table.reordered(sol.ids);
                const auto a = pipeline::analyze(sol.coords, ordered.columns,
                                                 threshold.value_or(cfg.collinearity_threshold), cfg.priority);
                io::write_text(out, stats::to_csv(a.table, stamp(cfg)));
            } else {
                auto columns = table.columns;
                pipeline::drop_constant(columns);
                io::write_text(out, stats::feature_agglomeration(columns).to_json().dump(2) + "\n");
            }
        } else if (sim_ratings->parsed()) {
            const fs::path out = require_out(g, "simulate ratings");
            const std::uint64_t seed = require_seed(cfg);
            const auto ids = stimulus_ids(sim_ids);
            Matrix space;
            if (latent == "planted") {
                space = simulate::planted_coordinates(ids.size(), latent_dims, Rng::derive(seed, 0x11a7));
            } else {
                if (sim_features.empty()) {
                    throw ConfigError("--latent descriptors needs --features");
                }
                space = simulate::descriptor_space(artifacts::read_features_csv(sim_features).reordered(ids).columns);
            }
            const auto records = simulate::simulate_ratings(spec, ids, space, seed);
            io::write_text(out, ratings::to_jsonl(records));
        } else if (run->parsed()) {
            if (!run_bank.empty()) {
                cfg.bank = run_bank;
            }
            if (!run_ratings.empty()) {
                cfg.ratings = run_ratings;
            }
            const auto bundle = pipeline::run_full(cfg);
            std::cout << "wrote " << bundle.artifacts.size() << " artifacts to " << bundle.dir
                      << " (stress1=" << bundle.solution.stress1 << ")\n";
        }
    } catch (const pipeline::StageError& e) {
        std::cerr << "error: stage=" << e.stage() << ": " << e.cause() << "\n";
        return e.stage() == "config" ? kExitConfig : kExitStage;
    } catch (const ConfigError& e) {
        std::cerr << "config error: " << e.what() << "\n";
        return kExitConfig;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitStage;
    }
    return 0;
}
