#include <fstream>
#include <set>
#include <thread>

#include "doctest.h"
#include "httplib.h"
#include "oracles.hpp"
#include "support.hpp"
#include "timbre/errors.hpp"
#include "timbre/io.hpp"
#include "timbre/service.hpp"
#include "timbre/wav.hpp"

using namespace timbre;
using namespace timbre::service;
using nlohmann::json;
namespace fs = std::filesystem;

namespace {

// The study bank rendered once for all service tests.
const fs::path& rendered_bank() {
    static testing::TempDir dir("service-bank");
    static bool done = false;
    if (!done) {
        render_bank(testing::study_bank(), dir.path);
        done = true;
    }
    return dir.path;
}

ServiceConfig config(const fs::path& log) {
    ServiceConfig c;
    c.stimulus_dir = rendered_bank();
    c.log_path = log;
    c.admin_token = "secret";
    return c;
}

std::vector<int> solve_screening(const ExperimentStore& store, const std::string& sid, int count = 6) {
    std::vector<int> answers;
    for (int k = 0; k < count; ++k) {
        answers.push_back(oracle::quietest_interval(*store.screening_wav(sid, k)));
    }
    return answers;
}

std::string passed_session(ExperimentStore& store, json meta = json::object()) {
    const auto r = store.create_session(meta);
    REQUIRE(r.status == 201);
    const std::string sid = r.body["session_id"];
    const auto s = store.submit_screening(sid, {{"answers", solve_screening(store, sid)}});
    REQUIRE(s.status == 200);
    REQUIRE(s.body["screening_state"] == "passed");
    return sid;
}

Response rate(ExperimentStore& store, const std::string& sid, std::size_t index, double rating) {
    return store.submit_rating(sid, {{"trial_index", index}, {"rating", rating},
                                     {"replay_count_a", 1}, {"replay_count_b", 0}});
}

}  // namespace

TEST_CASE("screening audio: stereo, one attenuated interval, one antiphase interval") {
    for (int correct = 0; correct < 3; ++correct) {
        const int anti = (correct + 1) % 3;
        const auto bytes = render_screening_wav({correct, anti}, 200.0, 6.0);
        const auto w = decode_wav_pcm(bytes);
        REQUIRE(w.channels == 2);
        CHECK(w.sample_rate == 44100);
        CHECK(w.samples.size() == 2 * static_cast<std::size_t>(4.0 * 44100));
        CHECK(oracle::quietest_interval(bytes) == correct);
        // per-interval level and phase relation
        for (int k = 0; k < 3; ++k) {
            double el = 0.0, sum_lr = 0.0;
            const std::size_t start = static_cast<std::size_t>(k) * 66150;
            for (std::size_t i = start + 4410; i < start + 44100 - 4410; ++i) {
                const double l = w.samples[2 * i];
                const double r = w.samples[2 * i + 1];
                el += l * l;
                sum_lr += l * r;
            }
            if (k == anti) {
                CHECK(sum_lr < 0.0);
            } else {
                CHECK(sum_lr > 0.0);
            }
            if (k != correct) {
                const double ratio_db = 10.0 * std::log10(el / (0.25 * 0.25 / 2 * (44100 - 8820)));
                CHECK(std::abs(ratio_db) < 0.1);
            } else {
                const double ratio_db = 10.0 * std::log10(el / (0.25 * 0.25 / 2 * (44100 - 8820)));
                CHECK(ratio_db == doctest::Approx(-6.0).epsilon(0.02));
            }
        }
        // the gaps are silent
        for (std::size_t i = 44100; i < 66150; ++i) {
            REQUIRE(w.samples[2 * i] == 0.0);
        }
    }
    for (const auto& t : screening_trials(7, 6)) {
        CHECK(t.correct_index >= 0);
        CHECK(t.correct_index <= 2);
        CHECK(t.antiphase_index != t.correct_index);
    }
}

TEST_CASE("no bank: 503") {
    testing::TempDir dir("svc");
    ServiceConfig c;
    c.log_path = dir.path / "log.jsonl";
    ExperimentStore store(c);
    CHECK_FALSE(store.bank_loaded());
    CHECK(store.create_session(json::object()).status == 503);
    CHECK(store.export_jsonl().empty());
}

TEST_CASE("create_session: schedule, metadata validation, independence") {
    testing::TempDir dir("svc");
    ExperimentStore store(config(dir.path / "log.jsonl"));
    const auto a = store.create_session({{"age", 30}});
    REQUIRE(a.status == 201);
    CHECK(a.body["schedule"].size() == 120);
    CHECK(a.body["total_trials"] == 120);
    CHECK(a.body["screening_urls"].size() == 6);
    CHECK(a.body["screening_state"] == "pending");
    CHECK(a.body["next_trial_index"] == 0);
    const std::string sid = a.body["session_id"];
    CHECK(sid.size() == 32);
    CHECK(sid.find_first_not_of("0123456789abcdef") == std::string::npos);
    const auto b = store.create_session(json::object());
    CHECK(b.body["session_id"] != a.body["session_id"]);
    CHECK(b.body["schedule"] != a.body["schedule"]);

    // schedule covers every unordered pair once
    std::set<std::pair<std::string, std::string>> pairs;
    for (const auto& t : a.body["schedule"]) {
        std::string x = t["stim_a"], y = t["stim_b"];
        pairs.insert({std::min(x, y), std::max(x, y)});
    }
    CHECK(pairs.size() == 120);

    CHECK(store.create_session({{"age", -1}}).status == 400);
    CHECK(store.create_session({{"age", "old"}}).status == 400);
    CHECK(store.create_session({{"hearing_issues", "yes"}}).status == 400);
    CHECK(store.create_session(json::array()).status == 400);
}

TEST_CASE("screening gate") {
    testing::TempDir dir("svc");
    ExperimentStore store(config(dir.path / "log.jsonl"));
    CHECK(store.submit_screening("ffff", {{"answers", {0, 0, 0, 0, 0, 0}}}).status == 404);

    const std::string sid = store.create_session(json::object()).body["session_id"];
    CHECK(rate(store, sid, 0, 1.0).status == 409);
    CHECK(store.submit_screening(sid, {{"answers", {0, 1}}}).status == 400);
    CHECK(store.submit_screening(sid, {{"answers", {0, 1, 2, 0, 1, 7}}}).status == 400);
    CHECK(store.submit_screening(sid, json::object()).status == 400);
    const auto right = solve_screening(store, sid);
    auto wrong = right;
    wrong[0] = (wrong[0] + 1) % 3;
    wrong[1] = (wrong[1] + 1) % 3;
    const auto r = store.submit_screening(sid, {{"answers", wrong}});
    CHECK(r.status == 200);
    CHECK(r.body["screening_state"] == "failed");
    CHECK(r.body["screening_correct"] == 4);
    CHECK(store.submit_screening(sid, {{"answers", right}}).status == 409);
    CHECK(rate(store, sid, 0, 1.0).status == 409);

    const std::string five = store.create_session(json::object()).body["session_id"];
    auto one_off = solve_screening(store, five);
    one_off[5] = (one_off[5] + 2) % 3;
    CHECK(store.submit_screening(five, {{"answers", one_off}}).body["screening_state"] == "passed");

    const auto six = passed_session(store);
    CHECK(store.progress(six).body["screening_correct"] == 6);
    CHECK(store.submit_screening(six, {{"answers", solve_screening(store, six)}}).status == 409);
}

TEST_CASE("ratings: validation, ordering, idempotence") {
    testing::TempDir dir("svc");
    ExperimentStore store(config(dir.path / "log.jsonl"));
    const auto sid = passed_session(store);
    CHECK(rate(store, "abcdef", 0, 1.0).status == 404);
    CHECK(rate(store, sid, 0, 4.25).status == 400);
    CHECK(rate(store, sid, 0, 9.5).status == 400);
    CHECK(rate(store, sid, 0, -0.5).status == 400);
    CHECK(store.submit_rating(sid, {{"trial_index", 0}}).status == 400);
    CHECK(store.submit_rating(sid, {{"trial_index", 0}, {"rating", 1}, {"replay_count_a", -2}}).status == 400);
    CHECK(rate(store, sid, 1, 4.5).status == 409);

    const auto ack = rate(store, sid, 0, 4.5);
    REQUIRE(ack.status == 200);
    CHECK(ack.body["trial_index"] == 0);
    CHECK(ack.body["rating"] == 4.5);
    CHECK(ack.body["next_trial_index"] == 1);
    // duplicate: original ack, nothing rewritten, even with a different value
    const auto dup = rate(store, sid, 0, 7.0);
    CHECK(dup.status == 200);
    CHECK(dup.body == ack.body);
    CHECK(store.export_records().size() == 1);
    CHECK(store.export_records()[0].rating == 4.5);
    CHECK(store.export_records()[0].replay_count_a == 1);
    CHECK(rate(store, sid, 5, 1.0).status == 409);
    CHECK(store.progress(sid).body["next_trial_index"] == 1);
    CHECK(store.progress("nope").status == 404);
}

TEST_CASE("complete session exports 120 records parseable by the ratings module") {
    testing::TempDir dir("svc");
    ExperimentStore store(config(dir.path / "log.jsonl"));
    CHECK(store.export_jsonl().empty());
    const auto sid = passed_session(store);
    const auto created = store.progress(sid);
    for (std::size_t t = 0; t < 120; ++t) {
        REQUIRE(rate(store, sid, t, 0.5 * static_cast<double>(t % 19)).status == 200);
    }
    CHECK(rate(store, sid, 120, 1.0).status == 409);
    CHECK(store.progress(sid).body["completed"] == true);
    const auto recs = ratings::parse_jsonl(store.export_jsonl());
    REQUIRE(recs.size() == 120);
    for (std::size_t t = 0; t < 120; ++t) {
        CHECK(recs[t].trial_index == t);
        CHECK(recs[t].session_id == sid);
        CHECK(!recs[t].excluded_flag);
    }
    const auto ids = store.stimulus_ids();
    CHECK(ratings::exclusion_check(recs, ids.size()).reason != ratings::ExclusionReason::incomplete);
    CHECK(ratings::mean_matrix(recs, ids).size() == 15);

    // flags at export
    const auto deaf = passed_session(store, {{"hearing_issues", true}});
    REQUIRE(rate(store, deaf, 0, 1.0).status == 200);
    const auto all = store.export_records();
    CHECK(all.back().excluded_flag == "hearing_issues");
    CHECK(store.authorized("secret"));
    CHECK_FALSE(store.authorized("secreT"));
    CHECK_FALSE(store.authorized(""));
}

TEST_CASE("log replay restores sessions; torn tail is cut; corruption is an error") {
    testing::TempDir dir("svc");
    const auto log = dir.path / "log.jsonl";
    std::string sid;
    {
        ExperimentStore store(config(log));
        sid = passed_session(store);
        for (std::size_t t = 0; t < 50; ++t) {
            REQUIRE(rate(store, sid, t, 2.0).status == 200);
        }
    }
    const auto before = io::read_text(log);
    {
        ExperimentStore store(config(log));
        CHECK(store.progress(sid).body["next_trial_index"] == 50);
        CHECK(store.export_records().size() == 50);
        CHECK(rate(store, sid, 49, 9.0).body["rating"] == 2.0);
        CHECK(rate(store, sid, 50, 3.0).status == 200);
    }
    // simulate a crash mid-write
    {
        std::ofstream f(log, std::ios::app | std::ios::binary);
        f << R"({"type":"rating","session_id":")" << sid << R"(","record":{"trial_in)";
    }
    {
        ExperimentStore store(config(log));
        CHECK(store.progress(sid).body["next_trial_index"] == 51);
        CHECK(rate(store, sid, 51, 3.0).status == 200);
    }
    {
        ExperimentStore store(config(log));
        const auto recs = store.export_records();
        CHECK(recs.size() == 52);
        std::set<std::size_t> idx;
        for (const auto& r : recs) {
            idx.insert(r.trial_index);
        }
        CHECK(idx.size() == 52);
    }
    // a bad line in the middle is not silently dropped
    auto text = io::read_text(log);
    text.insert(before.size() / 2, "\n{garbage}\n");
    io::write_text(log, text);
    CHECK_THROWS_AS(ExperimentStore(config(log)), ParseError);
}

TEST_CASE("concurrent sessions keep at-most-once per trial") {
    testing::TempDir dir("svc");
    ExperimentStore store(config(dir.path / "log.jsonl"));
    std::vector<std::string> sids;
    for (int k = 0; k < 4; ++k) {
        sids.push_back(passed_session(store));
    }
    std::vector<std::thread> threads;
    for (int k = 0; k < 8; ++k) {
        threads.emplace_back([&, k] {
            const auto& sid = sids[static_cast<std::size_t>(k % 4)];
            for (std::size_t t = 0; t < 120; ++t) {
                // two writers per session race on every index
                while (true) {
                    const auto r = rate(store, sid, t, 1.0);
                    if (r.status == 200) {
                        break;
                    }
                    std::this_thread::yield();
                }
            }
        });
    }
    for (auto& t : threads) {
        t.join();
    }
    const auto recs = store.export_records();
    CHECK(recs.size() == 4 * 120);
    std::set<std::pair<std::string, std::size_t>> keys;
    for (const auto& r : recs) {
        keys.insert({r.session_id, r.trial_index});
    }
    CHECK(keys.size() == recs.size());
    ExperimentStore replayed(config(dir.path / "log.jsonl"));
    CHECK(replayed.export_records() == recs);
}

TEST_CASE("HTTP round trip") {
    testing::TempDir dir("svc");
    ExperimentStore store(config(dir.path / "log.jsonl"));
    httplib::Server server;
    install_routes(server, store);
    const int port = server.bind_to_any_port("127.0.0.1");
    std::thread th([&] { server.listen_after_bind(); });
    server.wait_until_ready();
    httplib::Client cli("127.0.0.1", port);

    auto created = cli.Post("/api/sessions", R"({"age": 28})", "application/json");
    REQUIRE(created);
    CHECK(created->status == 201);
    const auto body = json::parse(created->body);
    const std::string sid = body["session_id"];

    const std::string first = body["schedule"][0]["stim_a"];
    auto wav = cli.Get("/api/stimuli/" + first + ".wav");
    REQUIRE(wav);
    CHECK(wav->status == 200);
    CHECK(wav->get_header_value("Content-Type") == "audio/wav");
    CHECK(wav->get_header_value("Cache-Control").find("max-age") != std::string::npos);
    CHECK(decode_wav(wav->body).samples.size() == 44100);
    CHECK(cli.Get("/api/stimuli/nope.wav")->status == 404);

    std::vector<int> answers;
    for (const auto& url : body["screening_urls"]) {
        auto s = cli.Get(url.get<std::string>());
        REQUIRE(s);
        CHECK(s->get_header_value("Content-Type") == "audio/wav");
        answers.push_back(oracle::quietest_interval(s->body));
    }
    auto scr = cli.Post("/api/sessions/" + sid + "/screening", json{{"answers", answers}}.dump(), "application/json");
    CHECK(json::parse(scr->body)["screening_state"] == "passed");

    auto ack = cli.Post("/api/sessions/" + sid + "/ratings", R"({"trial_index": 0, "rating": 3.5})", "application/json");
    CHECK(ack->status == 200);
    CHECK(cli.Post("/api/sessions/" + sid + "/ratings", "{not json", "application/json")->status == 400);
    CHECK(json::parse(cli.Get("/api/sessions/" + sid)->body)["next_trial_index"] == 1);

    CHECK(cli.Get("/api/export")->status == 401);
    CHECK(cli.Get("/api/export?token=wrong")->status == 401);
    auto exp = cli.Get("/api/export", {{"Authorization", "Bearer secret"}});
    REQUIRE(exp);
    CHECK(exp->status == 200);
    CHECK(ratings::parse_jsonl(exp->body).size() == 1);
    CHECK(cli.Get("/api/export?token=secret")->status == 200);

    server.stop();
    th.join();
}

TEST_CASE("HTTP: UI assets mounted at / next to the API") {
    testing::TempDir dir("svc-static");
    fs::create_directories(dir.path / "ui");
    io::write_text(dir.path / "ui" / "index.html", "<!doctype html><title>rate</title>");
    io::write_text(dir.path / "ui" / "app.js", "console.log(1);");
    ExperimentStore store(config(dir.path / "log.jsonl"));
    httplib::Server server;
    install_routes(server, store, dir.path / "ui");
    const int port = server.bind_to_any_port("127.0.0.1");
    std::thread th([&] { server.listen_after_bind(); });
    server.wait_until_ready();
    httplib::Client cli("127.0.0.1", port);

    auto index = cli.Get("/");
    REQUIRE(index);
    CHECK(index->status == 200);
    CHECK(index->body.find("<title>rate</title>") != std::string::npos);
    auto js = cli.Get("/app.js");
    REQUIRE(js);
    CHECK(js->body == "console.log(1);");
    CHECK(cli.Get("/missing.css")->status == 404);
    CHECK(cli.Post("/api/sessions", "{}", "application/json")->status == 201);

    server.stop();
    th.join();
}
