#pragma once

#include <cstdint>
#include <random>

namespace explore_go {

using Rng = std::mt19937_64;

// Independent substreams fanned out from one master seed.
enum class Stream : std::uint32_t {
  EnvTasks = 1,
  NetworkInit = 2,
  PolicyActions = 3,
  ExploreLength = 4,
  ExploreActions = 5,
  Minibatches = 6,
  Evaluation = 7,
  ExploreInit = 8,
  ExploreMinibatches = 9,
};

inline Rng make_stream(std::uint64_t master_seed, Stream stream) {
  std::seed_seq seq{static_cast<std::uint32_t>(master_seed),
                    static_cast<std::uint32_t>(master_seed >> 32),
                    static_cast<std::uint32_t>(stream), 0x45474fu};
  return Rng(seq);
}

}  // namespace explore_go
