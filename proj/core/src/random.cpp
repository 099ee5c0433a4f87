#include "collab/random.hpp"

namespace collab {

std::mt19937_64 make_stream(std::uint64_t seed, std::uint32_t agent, StreamTag tag) {
  std::seed_seq seq{static_cast<std::uint32_t>(seed & 0xFFFFFFFFu), static_cast<std::uint32_t>(seed >> 32),
                    agent, static_cast<std::uint32_t>(tag), 0x636F6C6Cu};
  return std::mt19937_64(seq);
}

}  // namespace collab
