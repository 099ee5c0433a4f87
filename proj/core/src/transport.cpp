#include "collab/transport.hpp"

#include <algorithm>
#include <bit>
#include <cstring>
#include <string>

#include <zlib.h>

#include "collab/errors.hpp"

namespace collab {

namespace {

void put_u32(std::vector<std::uint8_t>& out, std::uint32_t v) {
  for (int b = 0; b < 4; ++b) out.push_back(static_cast<std::uint8_t>(v >> (8 * b)));
}

void put_u64(std::vector<std::uint8_t>& out, std::uint64_t v) {
  for (int b = 0; b < 8; ++b) out.push_back(static_cast<std::uint8_t>(v >> (8 * b)));
}

std::uint32_t get_u32(std::span<const std::uint8_t> in, std::size_t at) {
  std::uint32_t v = 0;
  for (int b = 0; b < 4; ++b) v |= static_cast<std::uint32_t>(in[at + b]) << (8 * b);
  return v;
}

std::uint64_t get_u64(std::span<const std::uint8_t> in, std::size_t at) {
  std::uint64_t v = 0;
  for (int b = 0; b < 8; ++b) v |= static_cast<std::uint64_t>(in[at + b]) << (8 * b);
  return v;
}

std::uint32_t crc32_of(std::span<const std::uint8_t> bytes) {
  uLong crc = ::crc32(0L, Z_NULL, 0);
  crc = ::crc32(crc, bytes.data(), static_cast<uInt>(bytes.size()));
  return static_cast<std::uint32_t>(crc);
}

}  // namespace

bool same_frame(const ParamFrame& a, const ParamFrame& b) {
  if (a.sender != b.sender || a.round != b.round || a.payload.size() != b.payload.size()) return false;
  return a.payload.size() == 0 ||
         std::memcmp(a.payload.data(), b.payload.data(), sizeof(double) * static_cast<std::size_t>(a.payload.size())) == 0;
}

std::vector<std::uint8_t> encode_frame(const ParamFrame& frame) {
  std::vector<std::uint8_t> out;
  out.reserve(encoded_frame_size(frame.dim()));
  for (std::uint8_t byte : kFrameMagic) out.push_back(byte);
  out.push_back(kFrameVersion);
  put_u32(out, frame.sender);
  put_u32(out, frame.round);
  put_u32(out, frame.dim());
  for (Eigen::Index m = 0; m < frame.payload.size(); ++m) put_u64(out, std::bit_cast<std::uint64_t>(frame.payload[m]));
  put_u32(out, crc32_of(out));
  return out;
}

ParamFrame decode_frame(std::span<const std::uint8_t> bytes) {
  if (bytes.size() < kFrameHeaderSize + kFrameTrailerSize) {
    throw BadLengthError("frame of " + std::to_string(bytes.size()) + " bytes is shorter than the header");
  }
  if (!std::equal(kFrameMagic.begin(), kFrameMagic.end(), bytes.begin())) throw BadMagicError("bad frame magic");
  if (bytes[4] != kFrameVersion) throw BadVersionError("unsupported frame version " + std::to_string(bytes[4]));
  const std::uint32_t dim = get_u32(bytes, 13);
  if (static_cast<std::uint64_t>(bytes.size()) != kFrameHeaderSize + 8ull * dim + kFrameTrailerSize) {
    throw BadLengthError("frame length " + std::to_string(bytes.size()) + " does not match M=" + std::to_string(dim));
  }
  const std::size_t body = bytes.size() - kFrameTrailerSize;
  const std::uint32_t stored = get_u32(bytes, body);
  const std::uint32_t computed = crc32_of(bytes.first(body));
  if (stored != computed) throw BadChecksumError("frame checksum mismatch");

  ParamFrame frame;
  frame.sender = get_u32(bytes, 5);
  frame.round = get_u32(bytes, 9);
  frame.payload.resize(dim);
  for (std::uint32_t m = 0; m < dim; ++m) {
    frame.payload[m] = std::bit_cast<double>(get_u64(bytes, kFrameHeaderSize + 8 * m));
  }
  frame.checksum = stored;
  return frame;
}

std::string to_string(Phase phase) {
  return phase == Phase::graph_refresh ? "graph-refresh" : "neighbor-exchange";
}

TrafficCounters& TrafficCounters::operator+=(const TrafficCounters& other) {
  messages_sent += other.messages_sent;
  messages_received += other.messages_received;
  bytes_sent += other.bytes_sent;
  bytes_received += other.bytes_received;
  broadcast_messages += other.broadcast_messages;
  unicast_messages += other.unicast_messages;
  return *this;
}

std::vector<TrafficCounters>& TrafficReport::round_slot(std::uint32_t round) {
  auto& slot = rounds_[round];
  if (slot.size() != num_agents_) slot.resize(num_agents_);
  return slot;
}

void TrafficReport::record_send(std::uint32_t round, AgentId sender, std::size_t bytes, bool broadcast) {
  auto& c = round_slot(round).at(sender);
  c.messages_sent += 1;
  c.bytes_sent += bytes;
  (broadcast ? c.broadcast_messages : c.unicast_messages) += 1;
}

void TrafficReport::record_receive(std::uint32_t round, AgentId recipient, std::size_t bytes) {
  auto& c = round_slot(round).at(recipient);
  c.messages_received += 1;
  c.bytes_received += bytes;
}

std::vector<TrafficCounters> TrafficReport::totals() const {
  std::vector<TrafficCounters> out(num_agents_);
  for (const auto& [round, agents] : rounds_) {
    for (std::size_t i = 0; i < agents.size(); ++i) out[i] += agents[i];
  }
  return out;
}

TrafficCounters TrafficReport::global_totals() const {
  TrafficCounters out;
  for (const auto& c : totals()) out += c;
  return out;
}

TrafficCounters TrafficReport::round_totals(std::uint32_t round) const {
  TrafficCounters out;
  if (auto it = rounds_.find(round); it != rounds_.end()) {
    for (const auto& c : it->second) out += c;
  }
  return out;
}

void Transport::set_partners(AgentId agent, const std::vector<AgentId>& partners) {
  std::lock_guard lock(directory_mutex_);
  partners_[agent] = partners;
}

std::vector<AgentId> Transport::subscribers_of(AgentId agent) const {
  std::lock_guard lock(directory_mutex_);
  std::vector<AgentId> out;
  for (const auto& [subscriber, partners] : partners_) {
    if (std::binary_search(partners.begin(), partners.end(), agent)) out.push_back(subscriber);
  }
  return out;
}

// ------------------------------------------------------------------ in-memory

InMemoryBus::InMemoryBus(std::size_t num_endpoints, std::chrono::milliseconds gather_timeout)
    : mailboxes_(num_endpoints), timeout_(gather_timeout), traffic_(num_endpoints) {
  if (num_endpoints < 2) throw ConfigError("a bus needs at least two endpoints");
}

void InMemoryBus::check_endpoint(AgentId id, const char* role) const {
  if (id >= mailboxes_.size()) {
    throw RoutingError(std::string(role) + " " + std::to_string(id) + " is not a registered endpoint");
  }
}

void InMemoryBus::deliver(const std::vector<std::uint8_t>& bytes, AgentId sender, std::uint32_t round, Phase phase,
                          AgentId recipient) {
  auto& box = mailboxes_[recipient];
  {
    std::lock_guard lock(box.mutex);
    box.slots[{round, phase}][sender] = bytes;
  }
  box.arrived.notify_all();
  std::lock_guard lock(traffic_mutex_);
  traffic_.record_send(round, sender, bytes.size(), phase == Phase::graph_refresh);
  traffic_.record_receive(round, recipient, bytes.size());
}

DeliveryReceipt InMemoryBus::broadcast(const ParamFrame& frame) {
  check_endpoint(frame.sender, "sender");
  const auto bytes = encode_frame(frame);
  DeliveryReceipt receipt;
  for (AgentId r = 0; r < mailboxes_.size(); ++r) {
    if (r == frame.sender) continue;
    deliver(bytes, frame.sender, frame.round, Phase::graph_refresh, r);
    ++receipt.deliveries;
    receipt.bytes += bytes.size();
  }
  return receipt;
}

DeliveryReceipt InMemoryBus::send_to(const ParamFrame& frame, AgentId recipient) {
  check_endpoint(frame.sender, "sender");
  check_endpoint(recipient, "recipient");
  const auto bytes = encode_frame(frame);
  deliver(bytes, frame.sender, frame.round, Phase::neighbor_exchange, recipient);
  return DeliveryReceipt{1, bytes.size()};
}

GatherResult InMemoryBus::gather_round(AgentId endpoint, const std::vector<AgentId>& expected, std::uint32_t round,
                                       Phase phase) {
  check_endpoint(endpoint, "endpoint");
  auto& box = mailboxes_[endpoint];
  const Key key{round, phase};
  std::unique_lock lock(box.mutex);
  auto have_all = [&] {
    auto it = box.slots.find(key);
    if (expected.empty()) return true;
    if (it == box.slots.end()) return false;
    return std::all_of(expected.begin(), expected.end(), [&](AgentId s) { return it->second.contains(s); });
  };
  box.arrived.wait_for(lock, timeout_, have_all);

  GatherResult result;
  auto it = box.slots.find(key);
  for (AgentId s : expected) {
    if (it != box.slots.end()) {
      if (auto f = it->second.find(s); f != it->second.end()) {
        result.frames.emplace(s, decode_frame(f->second));
        continue;
      }
    }
    result.stale.push_back(s);
  }
  if (it != box.slots.end()) box.slots.erase(it);
  std::sort(result.stale.begin(), result.stale.end());
  return result;
}

TrafficReport InMemoryBus::traffic() const {
  std::lock_guard lock(traffic_mutex_);
  return traffic_;
}

std::size_t InMemoryBus::pending(AgentId endpoint) const {
  check_endpoint(endpoint, "endpoint");
  const auto& box = mailboxes_[endpoint];
  std::lock_guard lock(box.mutex);
  std::size_t n = 0;
  for (const auto& [key, frames] : box.slots) n += frames.size();
  return n;
}

}  // namespace collab
