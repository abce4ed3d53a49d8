#include <cstdlib>
#include <filesystem>
#include <sys/wait.h>

#include "doctest.h"
#include "support.hpp"
#include "timbre/errors.hpp"
#include "timbre/io.hpp"
#include "timbre/pipeline.hpp"
#include "timbre/rng.hpp"
#include "timbre/simulate.hpp"

using namespace timbre;
using namespace timbre::pipeline;
namespace fs = std::filesystem;

namespace {

// Ratings from planted 4-D coordinates, written next to a copy of the bank.
struct Study {
    testing::TempDir dir{"pipeline"};
    Matrix planted;
    PipelineConfig cfg;

    explicit Study(double sigma, std::size_t participants = 35) {
        fs::copy_file(testing::config_dir() / "bank_v1.json", dir.path / "bank_v1.json");
        const auto bank = testing::study_bank();
        planted = simulate::planted_coordinates(bank.patches.size(), 4, 99);
        simulate::SimulatedRaterSpec spec;
        spec.sigma = sigma;
        spec.participants = participants;
        const auto recs = simulate::simulate_ratings(spec, bank.ids(), planted, 12345);
        io::write_text(dir.path / "ratings.jsonl", ratings::to_jsonl(recs));
        cfg = load_config(testing::config_dir() / "pipeline.json");
        cfg.bank = dir.path / "bank_v1.json";
        cfg.ratings = dir.path / "ratings.jsonl";
        cfg.out = dir.path / "out";
        cfg.mds.restarts = 8;
    }
};

std::string slurp(const fs::path& p) { return io::read_text(p); }

int run_cli(const std::string& args) {
    const std::string cmd = std::string(TIMBRE_CLI_BIN) + " " + args + " >/dev/null 2>&1";
    const int st = std::system(cmd.c_str());
    return WIFEXITED(st) ? WEXITSTATUS(st) : -1;
}

}  // namespace

TEST_CASE("config: seed is mandatory, hash is stable and sensitive") {
    auto cfg = load_config(testing::config_dir() / "pipeline.json");
    CHECK(cfg.mds.dims == 4);
    CHECK(cfg.seed == 20240501u);
    CHECK(cfg.bank == testing::config_dir() / "bank_v1.json");
    const auto h = config_hash(cfg);
    CHECK(h.size() == 16);
    CHECK(config_hash(cfg) == h);
    auto other = cfg;
    other.seed = 1;
    CHECK(config_hash(other) != h);
    other = cfg;
    other.exec = kernels::Execution::serial;
    CHECK(config_hash(other) == h);
    other = cfg;
    other.out = "/elsewhere";
    CHECK(config_hash(other) == h);

    auto noseed = cfg;
    noseed.seed.reset();
    CHECK_THROWS_AS(validate(noseed), ConfigError);
    CHECK_THROWS_AS(config_from_json(nlohmann::json::array()), ConfigError);
    CHECK_THROWS_AS(config_from_json({{"execution", "sideways"}}), ConfigError);
}

TEST_CASE("simulated ratings: schema, determinism, noiseless proportionality") {
    const auto bank = testing::study_bank();
    const auto ids = bank.ids();
    const auto planted = simulate::planted_coordinates(ids.size(), 4, 3);
    simulate::SimulatedRaterSpec spec;
    spec.participants = 3;
    const auto a = simulate::simulate_ratings(spec, ids, planted, 77);
    CHECK(a.size() == 3 * 120);
    CHECK(a == simulate::simulate_ratings(spec, ids, planted, 77));
    CHECK(ratings::parse_jsonl(ratings::to_jsonl(a)) == a);
    for (const auto& r : a) {
        REQUIRE(ratings::on_rating_grid(r.rating));
    }

    spec.sigma = 0.0;
    spec.participants = 2;
    const auto clean = simulate::simulate_ratings(spec, ids, planted, 5);
    const auto m = ratings::mean_matrix(clean, ids);
    const auto want = kernels::pairwise_distances(planted);
    double dmax = 0.0;
    for (double v : want) {
        dmax = std::max(dmax, v);
    }
    const auto got = m.upper_triangle();
    for (std::size_t k = 0; k < got.size(); ++k) {
        CHECK(std::abs(got[k] - 9.0 * want[k] / dmax) <= 0.25 + 1e-12);
    }
    for (const auto& r : clean) {
        if (r.stim_a == r.stim_b) {
            CHECK(r.rating == 0.0);
        }
    }
    spec.sigma = -1.0;
    CHECK_THROWS_AS(simulate::validate(spec), ConfigError);
    spec = {};
    spec.participants = 0;
    CHECK_THROWS_AS(simulate::validate(spec), ConfigError);
    CHECK(simulate::quantize_rating(4.26) == 4.5);
    CHECK(simulate::quantize_rating(-3) == 0.0);
    CHECK(simulate::quantize_rating(12) == 9.0);
}

TEST_CASE("run_full writes every artifact, stamped, re-parseable and deterministic") {
    Study s(1.0);
    const auto bundle = run_full(s.cfg);
    for (const char* name : kArtifactNames) {
        CAPTURE(name);
        REQUIRE(fs::exists(s.cfg.out / name));
        CHECK(fs::file_size(s.cfg.out / name) > 0);
    }
    CHECK(!fs::exists(s.cfg.out / "FAILED"));
    const auto h = config_hash(s.cfg);
    for (const char* name : {"matrix.csv", "features.csv", "scree.csv", "table.csv"}) {
        CAPTURE(name);
        CHECK(slurp(s.cfg.out / name).rfind("#config_hash=" + h + "\n#seed=20240501\n", 0) == 0);
    }
    for (const char* name : {"solution.json", "tree.json"}) {
        const auto j = nlohmann::json::parse(slurp(s.cfg.out / name));
        CHECK(j.at("stamp").at("config_hash") == h);
        CHECK(j.at("stamp").at("seed") == 20240501u);
    }
    const auto manifest = nlohmann::json::parse(slurp(s.cfg.out / "manifest.json"));
    CHECK(manifest.at("config_hash") == h);

    // round trips through the consuming modules
    const auto m = ratings::read_matrix_csv(s.cfg.out / "matrix.csv");
    CHECK(m.ids == testing::study_bank().ids());
    CHECK(m.values == bundle.ratings.matrix.values);
    const auto sol = artifacts::read_solution(s.cfg.out / "solution.json");
    CHECK(sol.ids == m.ids);
    CHECK(sol.coords.cols() == 4);
    CHECK(sol.stress1 == bundle.solution.stress1);
    const auto feats = artifacts::read_features_csv(s.cfg.out / "features.csv");
    CHECK(feats.ids == m.ids);
    CHECK(feats.columns.size() == 12);
    const auto scree = io::read_csv(s.cfg.out / "scree.csv");
    CHECK(scree.header == std::vector<std::string>{"dims", "stress1", "r_squared"});
    REQUIRE(scree.rows.size() == 6);
    for (std::size_t k = 1; k < 6; ++k) {
        CHECK(io::parse_double(scree.rows[k][1], k) <= io::parse_double(scree.rows[k - 1][1], k) + 1e-3);
    }
    const auto table = io::read_csv(s.cfg.out / "table.csv");
    CHECK(table.header.size() == 1 + 3 * 4);
    CHECK(table.rows.size() == bundle.analysis.retained.size());
    const auto tree = nlohmann::json::parse(slurp(s.cfg.out / "tree.json"));
    CHECK(tree.at("format") == "timbre-dendrogram");
    CHECK(tree.at("root").contains("children"));
    for (const auto& entry : manifest.at("artifacts")) {
        const auto name = entry.at("file").get<std::string>();
        CHECK(entry.at("bytes") == fs::file_size(s.cfg.out / name));
    }

    // rerun into another directory, serial this time
    auto again = s.cfg;
    again.out = s.dir.path / "out2";
    again.exec = kernels::Execution::serial;
    again.mds.exec = kernels::Execution::serial;
    run_full(again);
    for (const char* name : kArtifactNames) {
        if (std::string(name) == "manifest.json") {
            continue;
        }
        CAPTURE(name);
        CHECK(slurp(s.cfg.out / name) == slurp(again.out / name));
    }
    const auto m2 = nlohmann::json::parse(slurp(again.out / "manifest.json"));
    CHECK(m2.at("artifacts") == manifest.at("artifacts"));
    for (const auto& e : fs::directory_iterator(s.cfg.out / "stimuli")) {
        if (e.path().extension() == ".wav") {
            CHECK(slurp(e.path()) == slurp(again.out / "stimuli" / e.path().filename()));
        }
    }
}

TEST_CASE("noiseless simulated study recovers the planted configuration") {
    Study s(0.0, 3);
    const auto bundle = run_full(s.cfg);
    CHECK(bundle.solution.stress1 <= 0.05);
    const double resid = mds::procrustes_align(s.planted, bundle.solution.coords).residual;
    // The 0.5-step grid alone costs about 0.06 here: classical scaling of the
    // same quantized matrix lands at the same residual.
    const double grid_cost =
        mds::procrustes_align(s.planted, mds::classical_mds(bundle.ratings.matrix, 4)).residual;
    CHECK(resid <= grid_cost + 0.01);
    CHECK(resid <= 0.10);
    WARN_MESSAGE(resid <= 0.05, "noiseless recovery residual " << resid << " exceeds 0.05 (grid-limited)");
}

TEST_CASE("missing ratings file fails in the ratings stage with a FAILED marker") {
    Study s(1.0, 1);
    s.cfg.ratings = s.dir.path / "nope.jsonl";
    try {
        run_full(s.cfg);
        FAIL("no exception");
    } catch (const StageError& e) {
        CHECK(e.stage() == "ratings");
        CHECK(!e.cause().empty());
    }
    const auto marker = slurp(s.cfg.out / "FAILED");
    CHECK(marker.rfind("stage=ratings\ncause=", 0) == 0);
    // earlier stages left their outputs
    CHECK(fs::exists(s.cfg.out / "stimuli" / "manifest.json"));
    CHECK(fs::exists(s.cfg.out / "features.csv"));

    // a later successful run clears the marker
    Study ok(1.0, 2);
    ok.cfg.out = s.cfg.out;
    run_full(ok.cfg);
    CHECK(!fs::exists(s.cfg.out / "FAILED"));
}

TEST_CASE("analyze drops constant columns before screening") {
    stats::FeatureColumns cols{{"a", {1, 2, 3, 4, 5}}, {"k", {2, 2, 2, 2, 2}}, {"b", {5, 1, 4, 2, 3}}};
    Matrix coords(5, 2);
    for (std::size_t i = 0; i < 5; ++i) {
        coords(i, 0) = static_cast<double>(i);
        coords(i, 1) = static_cast<double>((i * 3) % 5);
    }
    const auto an = analyze(coords, cols, 0.8, {"b", "k", "a"});
    CHECK(an.dropped_constant == std::vector<std::string>{"k"});
    CHECK(an.retained == std::vector<std::string>{"b", "a"});
    CHECK(an.tree.leaves.size() == 2);
    CHECK(an.table.rows == an.retained);
}

TEST_CASE("CLI exit codes") {
    testing::TempDir dir("cli");
    const auto bank = (testing::config_dir() / "bank_v1.json").string();
    const auto out = dir.path.string();
    CHECK(run_cli("--seed 3 --out " + out + "/r.jsonl simulate ratings --participants 2 --bank " + bank) == 0);
    CHECK(ratings::read_jsonl(dir.path / "r.jsonl").size() == 240);
    // no seed
    CHECK(run_cli("--out " + out + "/x.jsonl simulate ratings --bank " + bank) == 2);
    // missing ratings: stage failure
    CHECK(run_cli("--seed 3 --out " + out + "/run run --bank " + bank + " --ratings " + out + "/missing.jsonl") == 3);
    CHECK(fs::exists(dir.path / "run" / "FAILED"));
    CHECK(run_cli("--seed 3 --out " + out + "/run run --bank " + bank + " --ratings " + out + "/r.jsonl") == 0);
    CHECK(run_cli("--seed 3 --out " + out + "/m.json mds fit --dims 2 --matrix " + out + "/run/matrix.csv") == 0);
    CHECK(artifacts::read_solution(dir.path / "m.json").coords.cols() == 2);
    CHECK(run_cli("--seed 3 --out " + out + "/s.csv mds scree --max-dims 3 --matrix " + out + "/run/matrix.csv") == 0);
    CHECK(run_cli("--out " + out + "/t.csv analyze correlate --coords " + out + "/run/solution.json --features " +
                  out + "/run/features.csv") == 0);
    CHECK(run_cli("--out " + out + "/d.json analyze dendrogram --features " + out + "/run/features.csv") == 0);
    CHECK(run_cli("--out " + out + "/mx.csv ratings aggregate --ratings " + out + "/r.jsonl --bank " + bank) == 0);
    CHECK(run_cli("--out " + out + "/stim synth render --bank " + bank) == 0);
    CHECK(run_cli("--out " + out + "/f.csv features extract --bank " + out + "/stim") == 0);
    CHECK(run_cli("--seed 3 --out " + out + "/bad mds fit --matrix " + out + "/nothing.csv") != 0);
    CHECK(run_cli("--no-such-flag") == 2);
}
