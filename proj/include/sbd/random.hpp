#pragma once

#include <cstdint>
#include <random>
#include <string_view>

#include <Eigen/Dense>

namespace sbd {

using Rng = std::mt19937_64;

// Counter-based stream derivation: every random stream in a run is keyed by
// (master seed, purpose tag, round, index), so results do not depend on the
// order in which streams are consumed or on thread scheduling.
std::uint64_t derive_stream(std::uint64_t master, std::string_view purpose,
                            std::uint64_t round = 0, std::uint64_t index = 0);

inline Rng make_rng(std::uint64_t master, std::string_view purpose,
                    std::uint64_t round = 0, std::uint64_t index = 0) {
  return Rng(derive_stream(master, purpose, round, index));
}

double standard_normal(Rng& rng);
double uniform01(Rng& rng);
Eigen::VectorXd standard_normal_vector(Eigen::Index n, Rng& rng);

}  // namespace sbd
