#pragma once

// Dissimilarity ratings: trial schedules, participant exclusion and the mean
// dissimilarity matrix.

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "json.hpp"
#include "timbre/matrix.hpp"

namespace timbre::ratings {

inline constexpr double kMaxRating = 9.0;

struct Trial {
    std::size_t a = 0;  // stimulus index presented first
    std::size_t b = 0;

    bool identical() const { return a == b; }
    bool operator==(const Trial&) const = default;
};

constexpr std::size_t trial_count(std::size_t n) { return n * (n - 1) / 2 + n; }

// One trial per unordered pair (seeded direction) plus one identical trial
// per stimulus, in seeded-shuffled order. Throws ConfigError for n < 2.
std::vector<Trial> pair_schedule(std::size_t n, std::uint64_t seed);

// True for 0, 0.5, ..., 9.
bool on_rating_grid(double rating);

struct RatingRecord {
    std::string participant_id;
    std::string session_id;
    std::size_t trial_index = 0;
    std::string stim_a;
    std::string stim_b;
    double rating = 0.0;
    int replay_count_a = 0;
    int replay_count_b = 0;
    std::string submitted_at;                 // ISO-8601 UTC
    std::optional<std::string> excluded_flag;  // set by the experiment service

    bool operator==(const RatingRecord&) const = default;
};

nlohmann::json to_json(const RatingRecord& r);
// Throws ParseError (offset = 0) on schema violations or off-grid ratings.
RatingRecord record_from_json(const nlohmann::json& j);

// One JSON object per line; ParseError offset is the 0-based line number.
std::vector<RatingRecord> parse_jsonl(std::string_view text);
std::vector<RatingRecord> read_jsonl(const std::filesystem::path& path);
std::string to_jsonl(std::span<const RatingRecord> records);

struct ExclusionPolicy {
    // A participant is excluded when more than this many identical pairs
    // received a rating >= control_rating.
    int max_control_violations = 2;
    double control_rating = 1.0;
};

enum class ExclusionReason { none, incomplete, control, flagged };

struct Exclusion {
    ExclusionReason reason = ExclusionReason::none;
    std::string detail;

    bool included() const { return reason == ExclusionReason::none; }
};

std::string to_string(ExclusionReason reason);

// `records` are one participant's; n is the stimulus count of the study.
Exclusion exclusion_check(std::span<const RatingRecord> records, std::size_t n,
                          const ExclusionPolicy& policy = {});

struct DissimilarityMatrix {
    std::vector<std::string> ids;
    Matrix values;

    std::size_t size() const { return ids.size(); }
    // d[i][j] for i < j in row-major order.
    std::vector<double> upper_triangle() const;
};

// Throws ConfigError when the matrix is not square, symmetric, zero on the
// diagonal and non-negative.
void validate(const DissimilarityMatrix& m);

// Mean over all given records of each unordered pair; identical-pair
// records are ignored. Throws ConfigError naming a pair without ratings or
// an unknown stimulus id.
DissimilarityMatrix mean_matrix(std::span<const RatingRecord> records,
                                const std::vector<std::string>& ids);

struct ParticipantStatus {
    std::string participant_id;
    Exclusion exclusion;
};

struct Aggregate {
    DissimilarityMatrix matrix;
    std::vector<ParticipantStatus> participants;  // sorted by id
    std::size_t included = 0;
};

// Groups records by participant, applies exclusion_check and averages the
// included participants. Throws ConfigError if nobody is included.
Aggregate aggregate(std::span<const RatingRecord> records, const std::vector<std::string>& ids,
                    const ExclusionPolicy& policy = {});

// Header row of stimulus ids, then n rows of values.
std::string to_csv(const DissimilarityMatrix& m, std::span<const std::string> comments = {});
DissimilarityMatrix matrix_from_csv(std::string_view text);
DissimilarityMatrix read_matrix_csv(const std::filesystem::path& path);

}  // namespace timbre::ratings
