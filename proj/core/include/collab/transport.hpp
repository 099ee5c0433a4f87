#pragma once

#include <array>
#include <chrono>
#include <condition_variable>
#include <cstddef>
#include <cstdint>
#include <map>
#include <mutex>
#include <span>
#include <string>
#include <vector>

#include "collab/types.hpp"

namespace collab {

/// One agent's parameters for one round, as carried on the wire.
struct ParamFrame {
  std::uint32_t sender = 0;
  std::uint32_t round = 0;
  ParamVector payload;
  /// CRC-32 of the encoded header and payload; filled in by decode_frame.
  std::uint32_t checksum = 0;

  std::uint32_t dim() const { return static_cast<std::uint32_t>(payload.size()); }
};

/// Sender, round and payload bits match (the checksum is derived data).
bool same_frame(const ParamFrame& a, const ParamFrame& b);

inline constexpr std::array<std::uint8_t, 4> kFrameMagic{0x43, 0x4C, 0x41, 0x42};  // "CLAB"
inline constexpr std::uint8_t kFrameVersion = 0x01;
inline constexpr std::size_t kFrameHeaderSize = 4 + 1 + 4 + 4 + 4;
inline constexpr std::size_t kFrameTrailerSize = 4;

constexpr std::size_t encoded_frame_size(std::size_t dim) {
  return kFrameHeaderSize + 8 * dim + kFrameTrailerSize;
}

/// Little-endian wire layout:
///   magic[4] version[1] sender:u32 round:u32 M:u32 payload:f64[M] crc32:u32
/// where the CRC (IEEE polynomial) covers every byte before it.
std::vector<std::uint8_t> encode_frame(const ParamFrame& frame);

/// Throws BadLengthError, BadMagicError, BadVersionError or BadChecksumError.
ParamFrame decode_frame(std::span<const std::uint8_t> bytes);

enum class Phase : std::uint8_t { graph_refresh, neighbor_exchange };

std::string to_string(Phase phase);

struct TrafficCounters {
  std::uint64_t messages_sent = 0;
  std::uint64_t messages_received = 0;
  std::uint64_t bytes_sent = 0;
  std::uint64_t bytes_received = 0;
  std::uint64_t broadcast_messages = 0;  // deliveries issued by broadcast()
  std::uint64_t unicast_messages = 0;    // deliveries issued by send_to()

  TrafficCounters& operator+=(const TrafficCounters& other);
  friend bool operator==(const TrafficCounters&, const TrafficCounters&) = default;
};

/// Per-agent message accounting with a per-round breakdown.
class TrafficReport {
 public:
  explicit TrafficReport(std::size_t num_agents = 0) : num_agents_(num_agents) {}

  void record_send(std::uint32_t round, AgentId sender, std::size_t bytes, bool broadcast);
  void record_receive(std::uint32_t round, AgentId recipient, std::size_t bytes);

  std::size_t num_agents() const { return num_agents_; }
  /// Per-agent totals, summed over rounds.
  std::vector<TrafficCounters> totals() const;
  TrafficCounters global_totals() const;
  /// Counters summed over agents for one round (zeros when the round is absent).
  TrafficCounters round_totals(std::uint32_t round) const;
  const std::map<std::uint32_t, std::vector<TrafficCounters>>& per_round() const { return rounds_; }

 private:
  std::vector<TrafficCounters>& round_slot(std::uint32_t round);

  std::size_t num_agents_;
  std::map<std::uint32_t, std::vector<TrafficCounters>> rounds_;
};

struct DeliveryReceipt {
  std::size_t deliveries = 0;
  std::size_t bytes = 0;
};

struct GatherResult {
  /// Frames keyed (and iterated) by ascending sender id.
  std::map<AgentId, ParamFrame> frames;
  /// Expected senders whose frame did not arrive before the timeout.
  std::vector<AgentId> stale;

  bool complete() const { return stale.empty(); }
};

/// Message plane between agents. Safe for concurrent producers; each endpoint
/// has a single consumer.
class Transport {
 public:
  virtual ~Transport() = default;

  virtual std::size_t num_endpoints() const = 0;
  /// Delivers to every endpoint except the sender. Broadcast frames belong to
  /// the graph-refresh phase of their round.
  virtual DeliveryReceipt broadcast(const ParamFrame& frame) = 0;
  /// Single delivery in the neighbor-exchange phase of the frame's round.
  virtual DeliveryReceipt send_to(const ParamFrame& frame, AgentId recipient) = 0;
  /// Blocks until every expected sender's frame for (round, phase) is present
  /// or the timeout elapses. Frames for other rounds stay buffered.
  virtual GatherResult gather_round(AgentId endpoint, const std::vector<AgentId>& expected, std::uint32_t round,
                                    Phase phase) = 0;
  virtual TrafficReport traffic() const = 0;

  /// Partner directory: after a refresh each agent records whose parameters
  /// it needs. Control-plane metadata, not counted as traffic.
  void set_partners(AgentId agent, const std::vector<AgentId>& partners);
  /// Agents that listed `agent` as a partner, ascending.
  std::vector<AgentId> subscribers_of(AgentId agent) const;

 private:
  mutable std::mutex directory_mutex_;
  std::map<AgentId, std::vector<AgentId>> partners_;
};

/// Deterministic in-process bus. Frames travel as encoded bytes so the codec
/// and byte accounting match the socket transport.
class InMemoryBus final : public Transport {
 public:
  explicit InMemoryBus(std::size_t num_endpoints,
                       std::chrono::milliseconds gather_timeout = std::chrono::seconds(60));

  std::size_t num_endpoints() const override { return mailboxes_.size(); }
  DeliveryReceipt broadcast(const ParamFrame& frame) override;
  DeliveryReceipt send_to(const ParamFrame& frame, AgentId recipient) override;
  GatherResult gather_round(AgentId endpoint, const std::vector<AgentId>& expected, std::uint32_t round,
                            Phase phase) override;
  TrafficReport traffic() const override;

  /// Frames buffered at an endpoint for rounds/phases not yet gathered.
  std::size_t pending(AgentId endpoint) const;

 private:
  using Key = std::pair<std::uint32_t, Phase>;
  struct Mailbox {
    mutable std::mutex mutex;
    std::condition_variable arrived;
    std::map<Key, std::map<AgentId, std::vector<std::uint8_t>>> slots;
  };

  void deliver(const std::vector<std::uint8_t>& bytes, AgentId sender, std::uint32_t round, Phase phase,
               AgentId recipient);
  void check_endpoint(AgentId id, const char* role) const;

  std::vector<Mailbox> mailboxes_;
  std::chrono::milliseconds timeout_;
  mutable std::mutex traffic_mutex_;
  TrafficReport traffic_;
};

}  // namespace collab
