#pragma once

#include <cstdint>
#include <random>

namespace collab {

/// Stream tags keep draws for different purposes independent under one seed.
enum class StreamTag : std::uint32_t {
  scenario = 1,
  samples = 2,
  holdout = 3,
  probe = 4,
};

/// Deterministic generator for (seed, agent, tag). Streams for distinct
/// tuples are independent of each other and of the order they are created in.
std::mt19937_64 make_stream(std::uint64_t seed, std::uint32_t agent, StreamTag tag);

/// Stream shared by all agents (e.g. global scenario layout).
inline std::mt19937_64 make_global_stream(std::uint64_t seed, StreamTag tag) {
  return make_stream(seed, 0xFFFFFFFFu, tag);
}

}  // namespace collab
