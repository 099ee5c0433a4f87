#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "collab/tasks.hpp"

namespace collab {

/// 64-bit content digest rendered as 16 hex digits (CRC-32 and Adler-32 side by side).
std::string digest_hex(std::span<const std::uint8_t> bytes);
std::string digest_hex(std::string_view text);

/// Digest over the exact bits of every sample of every agent.
std::string dataset_digest(const std::vector<TaskDataset>& datasets);

}  // namespace collab
