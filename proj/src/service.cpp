#include "timbre/service.hpp"

#include <fcntl.h>
#include <unistd.h>

#include <chrono>
#include <cmath>
#include <ctime>
#include <numbers>
#include <random>

#include "httplib.h"
#include "timbre/bank.hpp"
#include "timbre/errors.hpp"
#include "timbre/io.hpp"
#include "timbre/rng.hpp"
#include "timbre/wav.hpp"

namespace timbre::service {

using nlohmann::json;
using ratings::RatingRecord;

std::string to_string(ScreeningState s) {
    switch (s) {
        case ScreeningState::pending: return "pending";
        case ScreeningState::passed: return "passed";
        case ScreeningState::failed: return "failed";
    }
    return "pending";
}

std::string random_token() {
    std::random_device rd;
    std::string out;
    static const char* hex = "0123456789abcdef";
    for (int i = 0; i < 4; ++i) {
        std::uint32_t w = rd();
        for (int k = 0; k < 8; ++k) {
            out.push_back(hex[w & 0xf]);
            w >>= 4;
        }
    }
    return out;
}

std::vector<ScreeningTrial> screening_trials(std::uint64_t seed, int count) {
    Rng rng(seed);
    std::vector<ScreeningTrial> out;
    for (int i = 0; i < count; ++i) {
        ScreeningTrial t;
        t.correct_index = static_cast<int>(rng.below(3));
        const int other = static_cast<int>(rng.below(2));
        t.antiphase_index = (t.correct_index + 1 + other) % 3;
        out.push_back(t);
    }
    return out;
}

std::string render_screening_wav(const ScreeningTrial& trial, double tone_hz, double attenuation_db) {
    const long sr = kSampleRate;
    const std::size_t tone = static_cast<std::size_t>(sr);
    const std::size_t gap = static_cast<std::size_t>(sr / 2);
    const std::size_t ramp = static_cast<std::size_t>(sr / 100);
    const double base = 0.25;
    std::vector<double> stereo;
    stereo.reserve(2 * (3 * tone + 2 * gap));
    for (int k = 0; k < 3; ++k) {
        const double amp = k == trial.correct_index ? base * std::pow(10.0, -attenuation_db / 20.0) : base;
        const double right_sign = k == trial.antiphase_index ? -1.0 : 1.0;
        for (std::size_t n = 0; n < tone; ++n) {
            double g = 1.0;
            if (n < ramp) {
                g = 0.5 * (1.0 - std::cos(std::numbers::pi * static_cast<double>(n) / ramp));
            } else if (n >= tone - ramp) {
                g = 0.5 * (1.0 - std::cos(std::numbers::pi * static_cast<double>(tone - 1 - n) / ramp));
            }
            const double x = amp * g * std::sin(2.0 * std::numbers::pi * tone_hz * n / sr);
            stereo.push_back(x);
            stereo.push_back(right_sign * x);
        }
        if (k < 2) {
            stereo.insert(stereo.end(), 2 * gap, 0.0);
        }
    }
    return encode_wav(stereo, 2, sr);
}

struct ExperimentStore::Session {
    std::string id;
    std::string created_at;
    std::optional<int> age;
    bool hearing_issues = false;
    std::uint64_t seed = 0;
    std::vector<std::string> ids;
    std::vector<ratings::Trial> schedule;
    std::vector<ScreeningTrial> screening;
    ScreeningState state = ScreeningState::pending;
    int screening_correct = 0;
    std::vector<RatingRecord> records;
    std::vector<json> acks;
    mutable std::mutex mutex;

    std::size_t next_trial() const { return records.size(); }

    json summary() const {
        return {{"session_id", id},
                {"screening_state", to_string(state)},
                {"screening_correct", screening_correct},
                {"screening_trials", screening.size()},
                {"next_trial_index", next_trial()},
                {"total_trials", schedule.size()},
                {"completed", state == ScreeningState::passed && next_trial() == schedule.size()}};
    }

    std::optional<std::string> excluded_flag() const {
        if (hearing_issues) {
            return "hearing_issues";
        }
        if (state == ScreeningState::failed) {
            return "screening_failed";
        }
        return std::nullopt;
    }
};

namespace {

std::string iso_now() {
    const auto now = std::chrono::system_clock::now();
    const std::time_t t = std::chrono::system_clock::to_time_t(now);
    const auto ms = std::chrono::duration_cast<std::chrono::milliseconds>(now.time_since_epoch()).count() % 1000;
    std::tm tm{};
    gmtime_r(&t, &tm);
    char buf[40];
    std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%S", &tm);
    char out[48];
    std::snprintf(out, sizeof out, "%s.%03dZ", buf, static_cast<int>(ms));
    return out;
}

Response error(int status, const std::string& message) { return {status, {{"error", message}}}; }

std::string read_file(const fs::path& p) {
    return io::read_text(p);
}

}  // namespace

ExperimentStore::ExperimentStore(ServiceConfig cfg) : cfg_(std::move(cfg)) {
    if (cfg_.screening_trials < 1 || cfg_.screening_pass < 0 || cfg_.screening_pass > cfg_.screening_trials) {
        throw ConfigError("service: screening pass threshold must lie in [0, trials]");
    }
    if (!cfg_.stimulus_dir.empty() && fs::exists(cfg_.stimulus_dir / "manifest.json")) {
        for (const auto& e : read_manifest(cfg_.stimulus_dir)) {
            ids_.push_back(e.id);
            wavs_[e.id] = read_file(cfg_.stimulus_dir / e.file);
        }
    }
    if (cfg_.log_path.empty()) {
        throw ConfigError("service: log path is required");
    }
    if (cfg_.log_path.has_parent_path()) {
        fs::create_directories(cfg_.log_path.parent_path());
    }
    replay();
    log_fd_ = ::open(cfg_.log_path.c_str(), O_WRONLY | O_CREAT | O_APPEND | O_CLOEXEC, 0644);
    if (log_fd_ < 0) {
        throw std::runtime_error("service: cannot open log " + cfg_.log_path.string());
    }
}

ExperimentStore::~ExperimentStore() {
    if (log_fd_ >= 0) {
        ::close(log_fd_);
    }
}

void ExperimentStore::replay() {
    if (!fs::exists(cfg_.log_path)) {
        return;
    }
    const std::string text = read_file(cfg_.log_path);
    std::size_t pos = 0;
    std::size_t line_no = 0;
    std::size_t good_end = 0;
    while (pos < text.size()) {
        const std::size_t nl = text.find('\n', pos);
        const bool last = nl == std::string::npos || nl + 1 == text.size();
        const std::string_view line(text.data() + pos, (nl == std::string::npos ? text.size() : nl) - pos);
        json event;
        try {
            if (nl == std::string::npos) {
                throw json::parse_error::create(101, 0, "unterminated line", nullptr);
            }
            event = json::parse(line);
        } catch (const json::parse_error&) {
            if (last) {
                break;  // torn write from a crash; never acknowledged
            }
            throw ParseError("event log: malformed line", line_no);
        }
        apply(event);
        good_end = nl + 1;
        pos = nl + 1;
        ++line_no;
    }
    if (good_end < text.size()) {
        fs::resize_file(cfg_.log_path, good_end);
    }
}

void ExperimentStore::append(const json& event) {
    const std::string line = event.dump() + "\n";
    std::lock_guard lock(log_mutex_);
    std::size_t done = 0;
    while (done < line.size()) {
        const ssize_t n = ::write(log_fd_, line.data() + done, line.size() - done);
        if (n < 0) {
            if (errno == EINTR) {
                continue;
            }
            throw std::runtime_error("service: log write failed");
        }
        done += static_cast<std::size_t>(n);
    }
    if (::fsync(log_fd_) != 0) {
        throw std::runtime_error("service: log fsync failed");
    }
}

ExperimentStore::Session& ExperimentStore::make_session(const json& event) {
    auto s = std::make_unique<Session>();
    s->id = event.at("session_id").get<std::string>();
    s->created_at = event.at("created_at").get<std::string>();
    if (event.contains("age") && !event.at("age").is_null()) {
        s->age = event.at("age").get<int>();
    }
    s->hearing_issues = event.value("hearing_issues", false);
    s->seed = event.at("seed").get<std::uint64_t>();
    s->ids = event.at("stimulus_ids").get<std::vector<std::string>>();
    s->schedule = ratings::pair_schedule(s->ids.size(), s->seed);
    s->screening = screening_trials(Rng::derive(s->seed, 1), event.value("screening_trials", cfg_.screening_trials));
    Session& ref = *s;
    order_.push_back(s->id);
    sessions_.emplace(s->id, std::move(s));
    return ref;
}

void ExperimentStore::apply(const json& event) {
    const std::string type = event.at("type").get<std::string>();
    if (type == "session_created") {
        make_session(event);
        return;
    }
    Session* s = find(event.at("session_id").get<std::string>());
    if (s == nullptr) {
        throw ParseError("event log: event for unknown session", 0);
    }
    if (type == "screening_resolved") {
        s->screening_correct = event.at("correct").get<int>();
        s->state = event.at("passed").get<bool>() ? ScreeningState::passed : ScreeningState::failed;
    } else if (type == "rating") {
        RatingRecord r = ratings::record_from_json(event.at("record"));
        if (r.trial_index != s->records.size()) {
            throw ParseError("event log: rating out of order", 0);
        }
        json ack = {{"session_id", s->id},
                    {"trial_index", r.trial_index},
                    {"rating", r.rating},
                    {"next_trial_index", r.trial_index + 1}};
        s->records.push_back(std::move(r));
        s->acks.push_back(std::move(ack));
    } else {
        throw ParseError("event log: unknown event type '" + type + "'", 0);
    }
}

ExperimentStore::Session* ExperimentStore::find(const std::string& id) const {
    const auto it = sessions_.find(id);
    return it == sessions_.end() ? nullptr : it->second.get();
}

Response ExperimentStore::create_session(const json& metadata) {
    if (!bank_loaded()) {
        return error(503, "stimulus bank not loaded");
    }
    if (!metadata.is_object()) {
        return error(400, "participant metadata must be a JSON object");
    }
    json event = {{"type", "session_created"},
                  {"session_id", random_token()},
                  {"created_at", iso_now()},
                  {"seed", std::random_device{}() | (std::uint64_t{std::random_device{}()} << 32)},
                  {"stimulus_ids", ids_},
                  {"screening_trials", cfg_.screening_trials},
                  {"hearing_issues", false},
                  {"age", nullptr}};
    if (metadata.contains("age")) {
        if (!metadata["age"].is_number_integer() || metadata["age"].get<int>() < 0) {
            return error(400, "age must be a non-negative integer");
        }
        event["age"] = metadata["age"];
    }
    if (metadata.contains("hearing_issues")) {
        if (!metadata["hearing_issues"].is_boolean()) {
            return error(400, "hearing_issues must be a boolean");
        }
        event["hearing_issues"] = metadata["hearing_issues"];
    }
    std::unique_lock lock(sessions_mutex_);
    append(event);
    Session& s = make_session(event);
    json schedule = json::array();
    for (std::size_t t = 0; t < s.schedule.size(); ++t) {
        schedule.push_back({{"trial_index", t},
                            {"stim_a", s.ids[s.schedule[t].a]},
                            {"stim_b", s.ids[s.schedule[t].b]}});
    }
    json screening = json::array();
    for (std::size_t k = 0; k < s.screening.size(); ++k) {
        screening.push_back("/api/screening/" + s.id + "/" + std::to_string(k) + ".wav");
    }
    json body = s.summary();
    body["schedule"] = std::move(schedule);
    body["screening_urls"] = std::move(screening);
    return {201, body};
}

Response ExperimentStore::submit_screening(const std::string& session_id, const json& body) {
    std::shared_lock map_lock(sessions_mutex_);
    Session* s = find(session_id);
    if (s == nullptr) {
        return error(404, "unknown session");
    }
    std::lock_guard lock(s->mutex);
    if (s->state != ScreeningState::pending) {
        return error(409, "screening already resolved");
    }
    if (!body.is_object() || !body.contains("answers") || !body["answers"].is_array() ||
        body["answers"].size() != s->screening.size()) {
        return error(400, "expected " + std::to_string(s->screening.size()) + " answers");
    }
    int correct = 0;
    std::vector<int> answers;
    for (std::size_t k = 0; k < s->screening.size(); ++k) {
        const auto& a = body["answers"][k];
        if (!a.is_number_integer() || a.get<int>() < 0 || a.get<int>() > 2) {
            return error(400, "answers must be interval indices 0, 1 or 2");
        }
        answers.push_back(a.get<int>());
        correct += answers.back() == s->screening[k].correct_index ? 1 : 0;
    }
    const bool passed = correct >= cfg_.screening_pass;
    const json event = {{"type", "screening_resolved"},
                        {"session_id", session_id},
                        {"answers", answers},
                        {"correct", correct},
                        {"passed", passed}};
    append(event);
    apply(event);
    return {200, s->summary()};
}

Response ExperimentStore::submit_rating(const std::string& session_id, const json& body) {
    std::shared_lock map_lock(sessions_mutex_);
    Session* s = find(session_id);
    if (s == nullptr) {
        return error(404, "unknown session");
    }
    std::lock_guard lock(s->mutex);
    if (!body.is_object() || !body.contains("trial_index") || !body["trial_index"].is_number_integer() ||
        !body.contains("rating") || !body["rating"].is_number()) {
        return error(400, "expected integer trial_index and numeric rating");
    }
    if (s->state != ScreeningState::passed) {
        return error(409, "screening not passed");
    }
    const auto index = body["trial_index"].get<long long>();
    if (index >= 0 && static_cast<std::size_t>(index) < s->acks.size()) {
        return {200, s->acks[static_cast<std::size_t>(index)]};
    }
    const double rating = body["rating"].get<double>();
    if (!ratings::on_rating_grid(rating)) {
        return error(400, "rating must be one of 0, 0.5, ..., 9");
    }
    int replay_a = 0;
    int replay_b = 0;
    for (auto [key, out] : {std::pair{"replay_count_a", &replay_a}, std::pair{"replay_count_b", &replay_b}}) {
        if (body.contains(key)) {
            if (!body[key].is_number_integer() || body[key].get<int>() < 0) {
                return error(400, std::string(key) + " must be a non-negative integer");
            }
            *out = body[key].get<int>();
        }
    }
    if (index < 0 || static_cast<std::size_t>(index) != s->next_trial()) {
        return error(409, "expected trial_index " + std::to_string(s->next_trial()));
    }
    if (s->next_trial() >= s->schedule.size()) {
        return error(409, "session already complete");
    }
    const auto& trial = s->schedule[s->next_trial()];
    RatingRecord r;
    r.participant_id = s->id;
    r.session_id = s->id;
    r.trial_index = s->next_trial();
    r.stim_a = s->ids[trial.a];
    r.stim_b = s->ids[trial.b];
    r.rating = rating;
    r.replay_count_a = replay_a;
    r.replay_count_b = replay_b;
    r.submitted_at = iso_now();
    const json event = {{"type", "rating"}, {"session_id", s->id}, {"record", ratings::to_json(r)}};
    append(event);
    apply(event);
    return {200, s->acks.back()};
}

Response ExperimentStore::progress(const std::string& session_id) const {
    std::shared_lock map_lock(sessions_mutex_);
    Session* s = find(session_id);
    if (s == nullptr) {
        return error(404, "unknown session");
    }
    std::lock_guard lock(s->mutex);
    return {200, s->summary()};
}

std::optional<std::string> ExperimentStore::stimulus_wav(const std::string& id) const {
    const auto it = wavs_.find(id);
    if (it == wavs_.end()) {
        return std::nullopt;
    }
    return it->second;
}

std::optional<std::string> ExperimentStore::screening_wav(const std::string& session_id, int trial) const {
    std::shared_lock map_lock(sessions_mutex_);
    Session* s = find(session_id);
    if (s == nullptr || trial < 0 || static_cast<std::size_t>(trial) >= s->screening.size()) {
        return std::nullopt;
    }
    return render_screening_wav(s->screening[static_cast<std::size_t>(trial)], cfg_.screening_tone_hz,
                                cfg_.screening_attenuation_db);
}

std::vector<RatingRecord> ExperimentStore::export_records() const {
    std::shared_lock map_lock(sessions_mutex_);
    std::vector<RatingRecord> out;
    for (const auto& id : order_) {
        const Session& s = *sessions_.at(id);
        std::lock_guard lock(s.mutex);
        const auto flag = s.excluded_flag();
        for (RatingRecord r : s.records) {
            r.excluded_flag = flag;
            out.push_back(std::move(r));
        }
    }
    return out;
}

std::string ExperimentStore::export_jsonl() const { return ratings::to_jsonl(export_records()); }

bool ExperimentStore::authorized(const std::string& token) const {
    if (cfg_.admin_token.empty() || token.size() != cfg_.admin_token.size()) {
        return false;
    }
    unsigned diff = 0;
    for (std::size_t i = 0; i < token.size(); ++i) {
        diff |= static_cast<unsigned char>(token[i] ^ cfg_.admin_token[i]);
    }
    return diff == 0;
}

namespace {

void send(httplib::Response& res, const Response& r) {
    res.status = r.status;
    res.set_content(r.body.dump(), "application/json");
}

json parse_body(const httplib::Request& req, httplib::Response& res, bool& ok) {
    ok = true;
    if (req.body.empty()) {
        return json::object();
    }
    try {
        return json::parse(req.body);
    } catch (const json::parse_error&) {
        ok = false;
        send(res, error(400, "request body is not valid JSON"));
        return nullptr;
    }
}

}  // namespace

void install_routes(httplib::Server& server, ExperimentStore& store, const fs::path& static_dir) {
    server.Post("/api/sessions", [&store](const httplib::Request& req, httplib::Response& res) {
        bool ok = false;
        const json body = parse_body(req, res, ok);
        if (ok) {
            send(res, store.create_session(body));
        }
    });
    server.Get(R"(/api/stimuli/([A-Za-z0-9_.\-]+)\.wav)",
               [&store](const httplib::Request& req, httplib::Response& res) {
                   if (!store.bank_loaded()) {
                       return send(res, error(503, "stimulus bank not loaded"));
                   }
                   const auto wav = store.stimulus_wav(req.matches[1]);
                   if (!wav) {
                       return send(res, error(404, "unknown stimulus"));
                   }
                   res.set_header("Cache-Control", "public, max-age=86400, immutable");
                   res.set_content(*wav, "audio/wav");
               });
    server.Get(R"(/api/screening/([0-9a-f]+)/([0-9]+)\.wav)",
               [&store](const httplib::Request& req, httplib::Response& res) {
                   const auto wav = store.screening_wav(req.matches[1], std::stoi(req.matches[2]));
                   if (!wav) {
                       return send(res, error(404, "unknown session or screening trial"));
                   }
                   res.set_header("Cache-Control", "private, no-store");
                   res.set_content(*wav, "audio/wav");
               });
    server.Post(R"(/api/sessions/([0-9a-f]+)/screening)",
                [&store](const httplib::Request& req, httplib::Response& res) {
                    bool ok = false;
                    const json body = parse_body(req, res, ok);
                    if (ok) {
                        send(res, store.submit_screening(req.matches[1], body));
                    }
                });
    server.Post(R"(/api/sessions/([0-9a-f]+)/ratings)",
                [&store](const httplib::Request& req, httplib::Response& res) {
                    bool ok = false;
                    const json body = parse_body(req, res, ok);
                    if (ok) {
                        send(res, store.submit_rating(req.matches[1], body));
                    }
                });
    server.Get(R"(/api/sessions/([0-9a-f]+))", [&store](const httplib::Request& req, httplib::Response& res) {
        send(res, store.progress(req.matches[1]));
    });
    server.Get("/api/export", [&store](const httplib::Request& req, httplib::Response& res) {
        std::string token = req.get_param_value("token");
        const std::string auth = req.get_header_value("Authorization");
        if (auth.rfind("Bearer ", 0) == 0) {
            token = auth.substr(7);
        }
        if (!store.authorized(token)) {
            return send(res, error(401, "admin token required"));
        }
        res.set_content(store.export_jsonl(), "application/x-ndjson");
    });
    if (!static_dir.empty()) {
        server.set_mount_point("/", static_dir.string());
    }
}

}  // namespace timbre::service
