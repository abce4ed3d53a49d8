#pragma once

// Simulated raters: a declared stand-in for human dissimilarity judgements
// (linear distance-to-rating map, Gaussian noise, 0.5-step quantisation).

#include <cstdint>
#include <string>
#include <vector>

#include "timbre/matrix.hpp"
#include "timbre/ratings.hpp"
#include "timbre/stats.hpp"

namespace timbre::simulate {

struct SimulatedRaterSpec {
    std::size_t participants = 35;
    double sigma = 1.0;            // rating noise, scale points
    double max_rating = ratings::kMaxRating;  // the largest latent distance maps here
};

void validate(const SimulatedRaterSpec& spec);

// n points with independent standard-normal coordinates.
Matrix planted_coordinates(std::size_t n, std::size_t dims, std::uint64_t seed);

// Columns z-scored (constant columns contribute zero) and used as a latent space.
Matrix descriptor_space(const stats::FeatureColumns& columns);

// Snap to the 0.5 grid and clamp to [0, 9].
double quantize_rating(double x);

// Every participant rates a full pair_schedule. Participant p is named
// "sim-NNN" and uses Rng::derive(seed, p) for both schedule and noise.
std::vector<ratings::RatingRecord> simulate_ratings(const SimulatedRaterSpec& spec,
                                                    const std::vector<std::string>& ids,
                                                    const Matrix& latent, std::uint64_t seed);

}  // namespace timbre::simulate
