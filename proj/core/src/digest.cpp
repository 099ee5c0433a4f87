#include "collab/digest.hpp"

#include <bit>
#include <cstdio>

#include <zlib.h>

namespace collab {

std::string digest_hex(std::span<const std::uint8_t> bytes) {
  uLong crc = ::crc32(0L, Z_NULL, 0);
  uLong adler = ::adler32(0L, Z_NULL, 0);
  crc = ::crc32(crc, bytes.data(), static_cast<uInt>(bytes.size()));
  adler = ::adler32(adler, bytes.data(), static_cast<uInt>(bytes.size()));
  char buf[17];
  std::snprintf(buf, sizeof buf, "%08lx%08lx", static_cast<unsigned long>(crc & 0xFFFFFFFFul),
                static_cast<unsigned long>(adler & 0xFFFFFFFFul));
  return buf;
}

std::string digest_hex(std::string_view text) {
  return digest_hex(std::span<const std::uint8_t>(reinterpret_cast<const std::uint8_t*>(text.data()), text.size()));
}

std::string dataset_digest(const std::vector<TaskDataset>& datasets) {
  std::vector<std::uint8_t> bytes;
  auto put = [&](double v) {
    const auto bits = std::bit_cast<std::uint64_t>(v);
    for (int b = 0; b < 8; ++b) bytes.push_back(static_cast<std::uint8_t>(bits >> (8 * b)));
  };
  for (const auto& d : datasets) {
    put(static_cast<double>(d.inputs.rows()));
    put(static_cast<double>(d.inputs.cols()));
    for (Eigen::Index r = 0; r < d.inputs.rows(); ++r) {
      for (Eigen::Index c = 0; c < d.inputs.cols(); ++c) put(d.inputs(r, c));
      put(d.targets[r]);
    }
  }
  return digest_hex(bytes);
}

}  // namespace collab
