#pragma once

// Listening-experiment service: sessions, headphone screening, durable
// rating capture (append-only JSONL event log) and dataset export.

#include <cstdint>
#include <filesystem>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <shared_mutex>
#include <string>
#include <vector>

#include "json.hpp"
#include "timbre/ratings.hpp"

namespace httplib {
class Server;
}

namespace timbre::service {

namespace fs = std::filesystem;

struct ServiceConfig {
    fs::path stimulus_dir;  // rendered bank (manifest.json + WAVs); empty = no bank
    fs::path log_path;
    std::string admin_token;  // empty disables export
    int screening_trials = 6;
    int screening_pass = 5;
    double screening_tone_hz = 200.0;
    double screening_attenuation_db = 6.0;
};

enum class ScreeningState { pending, passed, failed };
std::string to_string(ScreeningState s);

struct ScreeningTrial {
    int correct_index = 0;    // attenuated interval
    int antiphase_index = 1;  // never the attenuated one
};

// Three 1 s tone intervals separated by 0.5 s of silence, stereo.
std::string render_screening_wav(const ScreeningTrial& trial, double tone_hz, double attenuation_db);
std::vector<ScreeningTrial> screening_trials(std::uint64_t seed, int count);

struct Response {
    int status = 200;
    nlohmann::json body;
};

class ExperimentStore {
public:
    // Loads the bank (if any) and replays the log. A torn final line left by
    // a crash is cut off; any other malformed line is a ParseError.
    explicit ExperimentStore(ServiceConfig cfg);
    ~ExperimentStore();
    ExperimentStore(const ExperimentStore&) = delete;
    ExperimentStore& operator=(const ExperimentStore&) = delete;

    bool bank_loaded() const { return !ids_.empty(); }
    const std::vector<std::string>& stimulus_ids() const { return ids_; }

    Response create_session(const nlohmann::json& metadata);
    Response submit_screening(const std::string& session_id, const nlohmann::json& body);
    Response submit_rating(const std::string& session_id, const nlohmann::json& body);
    Response progress(const std::string& session_id) const;

    std::optional<std::string> stimulus_wav(const std::string& id) const;
    std::optional<std::string> screening_wav(const std::string& session_id, int trial) const;

    // Records of acknowledged trials, sessions in creation order.
    std::string export_jsonl() const;
    std::vector<ratings::RatingRecord> export_records() const;

    bool authorized(const std::string& token) const;

private:
    struct Session;

    Session* find(const std::string& id) const;
    void append(const nlohmann::json& event);
    void apply(const nlohmann::json& event);
    void replay();
    Session& make_session(const nlohmann::json& event);

    ServiceConfig cfg_;
    std::vector<std::string> ids_;
    std::map<std::string, std::string> wavs_;  // id -> bytes
    mutable std::shared_mutex sessions_mutex_;
    std::map<std::string, std::unique_ptr<Session>> sessions_;
    std::vector<std::string> order_;
    std::mutex log_mutex_;
    int log_fd_ = -1;
};

// Registers the HTTP API on `server`. A non-empty static_dir is mounted at /.
void install_routes(httplib::Server& server, ExperimentStore& store, const fs::path& static_dir = {});

// 128 random bits as 32 lowercase hex digits.
std::string random_token();

}  // namespace timbre::service
