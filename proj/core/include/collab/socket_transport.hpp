#pragma once

#include <atomic>
#include <chrono>
#include <condition_variable>
#include <cstdint>
#include <map>
#include <mutex>
#include <string>
#include <thread>
#include <vector>

#include "collab/transport.hpp"

namespace collab {

/// Host and base port for the listeners; endpoint i listens on port + i
/// (or an ephemeral port when the base port is 0).
struct BindAddress {
  std::string host = "127.0.0.1";
  std::uint16_t port = 0;

  /// Parses "host:port"; throws ConfigError.
  static BindAddress parse(const std::string& text);
  /// From COLLAB_BIND, falling back to 127.0.0.1:0.
  static BindAddress from_environment();
};

/// TCP transport for endpoints hosted in this process. Every frame travels
/// as a u32 little-endian length followed by the encoded frame bytes.
class SocketTransport final : public Transport {
 public:
  SocketTransport(std::size_t num_endpoints, BindAddress bind = BindAddress::from_environment(),
                  std::chrono::milliseconds gather_timeout = std::chrono::seconds(5));
  ~SocketTransport() override;

  SocketTransport(const SocketTransport&) = delete;
  SocketTransport& operator=(const SocketTransport&) = delete;

  std::size_t num_endpoints() const override { return ports_.size(); }
  DeliveryReceipt broadcast(const ParamFrame& frame) override;
  DeliveryReceipt send_to(const ParamFrame& frame, AgentId recipient) override;
  GatherResult gather_round(AgentId endpoint, const std::vector<AgentId>& expected, std::uint32_t round,
                            Phase phase) override;
  TrafficReport traffic() const override;

  std::uint16_t port_of(AgentId endpoint) const { return ports_.at(endpoint); }
  /// Frames that arrived but failed to decode.
  std::size_t rejected_frames() const { return rejected_.load(); }

 private:
  struct Outgoing {
    std::mutex mutex;
    int fd = -1;
  };
  struct Inbox {
    std::map<std::uint32_t, std::map<AgentId, ParamFrame>> rounds;
  };

  void io_loop();
  void send_bytes(AgentId recipient, const std::vector<std::uint8_t>& bytes);
  void check_endpoint(AgentId id, const char* role) const;

  std::string host_;
  std::vector<int> listeners_;
  std::vector<std::uint16_t> ports_;
  std::vector<Outgoing> outgoing_;
  int wake_pipe_[2] = {-1, -1};
  std::atomic<bool> stopping_{false};
  std::atomic<std::size_t> rejected_{0};
  std::chrono::milliseconds timeout_;

  mutable std::mutex inbox_mutex_;
  std::condition_variable arrived_;
  std::vector<Inbox> inboxes_;

  mutable std::mutex traffic_mutex_;
  TrafficReport traffic_;

  std::thread io_thread_;
};

}  // namespace collab
