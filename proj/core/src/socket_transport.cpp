#include "collab/socket_transport.hpp"

#include <arpa/inet.h>
#include <fcntl.h>
#include <netinet/in.h>
#include <netinet/tcp.h>
#include <poll.h>
#include <sys/socket.h>
#include <unistd.h>

#include <algorithm>
#include <cerrno>
#include <cstdlib>
#include <cstring>

#include "collab/errors.hpp"

namespace collab {

BindAddress BindAddress::parse(const std::string& text) {
  const auto colon = text.rfind(':');
  if (colon == std::string::npos || colon == 0) throw ConfigError("bind address must be host:port, got '" + text + "'");
  BindAddress out;
  out.host = text.substr(0, colon);
  const std::string port = text.substr(colon + 1);
  char* end = nullptr;
  const long value = std::strtol(port.c_str(), &end, 10);
  if (port.empty() || *end != '\0' || value < 0 || value > 65535) throw ConfigError("bad port in bind address '" + text + "'");
  out.port = static_cast<std::uint16_t>(value);
  return out;
}

BindAddress BindAddress::from_environment() {
  const char* env = std::getenv("COLLAB_BIND");
  if (env == nullptr || *env == '\0') return BindAddress{};
  return parse(env);
}

namespace {

sockaddr_in make_address(const std::string& host, std::uint16_t port) {
  sockaddr_in addr{};
  addr.sin_family = AF_INET;
  addr.sin_port = htons(port);
  if (::inet_pton(AF_INET, host.c_str(), &addr.sin_addr) != 1) throw ConfigError("bind host must be an IPv4 address: " + host);
  return addr;
}

void write_all(int fd, const std::uint8_t* data, std::size_t size) {
  while (size > 0) {
    const ssize_t n = ::send(fd, data, size, MSG_NOSIGNAL);
    if (n < 0) {
      if (errno == EINTR) continue;
      throw IoError(std::string("socket send failed: ") + std::strerror(errno));
    }
    data += n;
    size -= static_cast<std::size_t>(n);
  }
}

}  // namespace

SocketTransport::SocketTransport(std::size_t num_endpoints, BindAddress bind, std::chrono::milliseconds gather_timeout)
    : host_(bind.host), outgoing_(num_endpoints), timeout_(gather_timeout), inboxes_(num_endpoints),
      traffic_(num_endpoints) {
  if (num_endpoints < 2) throw ConfigError("a transport needs at least two endpoints");
  for (std::size_t i = 0; i < num_endpoints; ++i) {
    const int fd = ::socket(AF_INET, SOCK_STREAM, 0);
    if (fd < 0) throw IoError(std::string("socket() failed: ") + std::strerror(errno));
    listeners_.push_back(fd);
    const int one = 1;
    ::setsockopt(fd, SOL_SOCKET, SO_REUSEADDR, &one, sizeof one);
    const std::uint16_t port = bind.port == 0 ? 0 : static_cast<std::uint16_t>(bind.port + i);
    sockaddr_in addr = make_address(bind.host, port);
    if (::bind(fd, reinterpret_cast<sockaddr*>(&addr), sizeof addr) != 0 || ::listen(fd, 64) != 0) {
      const std::string err = std::strerror(errno);
      for (int l : listeners_) ::close(l);
      throw IoError("cannot listen on " + bind.host + ":" + std::to_string(port) + ": " + err);
    }
    socklen_t len = sizeof addr;
    ::getsockname(fd, reinterpret_cast<sockaddr*>(&addr), &len);
    ports_.push_back(ntohs(addr.sin_port));
  }
  if (::pipe(wake_pipe_) != 0) throw IoError("cannot create wakeup pipe");
  io_thread_ = std::thread([this] { io_loop(); });
}

SocketTransport::~SocketTransport() {
  stopping_ = true;
  const char byte = 1;
  [[maybe_unused]] auto n = ::write(wake_pipe_[1], &byte, 1);
  if (io_thread_.joinable()) io_thread_.join();
  for (auto& o : outgoing_) {
    if (o.fd >= 0) ::close(o.fd);
  }
  for (int fd : listeners_) ::close(fd);
  ::close(wake_pipe_[0]);
  ::close(wake_pipe_[1]);
}

void SocketTransport::check_endpoint(AgentId id, const char* role) const {
  if (id >= ports_.size()) throw RoutingError(std::string(role) + " " + std::to_string(id) + " is not a registered endpoint");
}

void SocketTransport::io_loop() {
  struct Connection {
    int fd;
    AgentId endpoint;
    std::vector<std::uint8_t> buffer;
  };
  std::vector<Connection> connections;
  std::vector<std::uint8_t> chunk(1 << 16);

  while (!stopping_) {
    std::vector<pollfd> fds;
    fds.push_back({wake_pipe_[0], POLLIN, 0});
    for (int l : listeners_) fds.push_back({l, POLLIN, 0});
    for (const auto& c : connections) fds.push_back({c.fd, POLLIN, 0});
    if (::poll(fds.data(), fds.size(), 200) < 0) {
      if (errno == EINTR) continue;
      break;
    }
    if (fds[0].revents != 0) break;

    for (std::size_t i = 0; i < listeners_.size(); ++i) {
      if ((fds[1 + i].revents & POLLIN) == 0) continue;
      const int fd = ::accept(listeners_[i], nullptr, nullptr);
      if (fd >= 0) connections.push_back({fd, static_cast<AgentId>(i), {}});
    }

    const std::size_t base = 1 + listeners_.size();
    std::vector<std::size_t> closed;
    for (std::size_t c = 0; c + base < fds.size(); ++c) {
      if (fds[base + c].revents == 0) continue;
      Connection& conn = connections[c];
      const ssize_t n = ::recv(conn.fd, chunk.data(), chunk.size(), 0);
      if (n <= 0) {
        closed.push_back(c);
        continue;
      }
      conn.buffer.insert(conn.buffer.end(), chunk.begin(), chunk.begin() + n);
      std::size_t offset = 0;
      while (conn.buffer.size() - offset >= 4) {
        const std::uint32_t len = static_cast<std::uint32_t>(conn.buffer[offset]) |
                                  static_cast<std::uint32_t>(conn.buffer[offset + 1]) << 8 |
                                  static_cast<std::uint32_t>(conn.buffer[offset + 2]) << 16 |
                                  static_cast<std::uint32_t>(conn.buffer[offset + 3]) << 24;
        if (conn.buffer.size() - offset - 4 < len) break;
        std::span<const std::uint8_t> bytes(conn.buffer.data() + offset + 4, len);
        offset += 4 + len;
        try {
          ParamFrame frame = decode_frame(bytes);
          {
            std::lock_guard lock(traffic_mutex_);
            traffic_.record_receive(frame.round, conn.endpoint, len);
          }
          {
            std::lock_guard lock(inbox_mutex_);
            inboxes_[conn.endpoint].rounds[frame.round][frame.sender] = std::move(frame);
          }
          arrived_.notify_all();
        } catch (const DecodeError&) {
          ++rejected_;
        }
      }
      conn.buffer.erase(conn.buffer.begin(), conn.buffer.begin() + static_cast<std::ptrdiff_t>(offset));
    }
    for (auto it = closed.rbegin(); it != closed.rend(); ++it) {
      ::close(connections[*it].fd);
      connections.erase(connections.begin() + static_cast<std::ptrdiff_t>(*it));
    }
  }
  for (const auto& c : connections) ::close(c.fd);
}

void SocketTransport::send_bytes(AgentId recipient, const std::vector<std::uint8_t>& bytes) {
  Outgoing& out = outgoing_[recipient];
  std::lock_guard lock(out.mutex);
  if (out.fd < 0) {
    const int fd = ::socket(AF_INET, SOCK_STREAM, 0);
    if (fd < 0) throw IoError(std::string("socket() failed: ") + std::strerror(errno));
    const int one = 1;
    ::setsockopt(fd, IPPROTO_TCP, TCP_NODELAY, &one, sizeof one);
    sockaddr_in addr = make_address(host_ == "0.0.0.0" ? "127.0.0.1" : host_, ports_[recipient]);
    if (::connect(fd, reinterpret_cast<sockaddr*>(&addr), sizeof addr) != 0) {
      const std::string err = std::strerror(errno);
      ::close(fd);
      throw IoError("cannot connect to endpoint " + std::to_string(recipient) + ": " + err);
    }
    out.fd = fd;
  }
  std::uint8_t prefix[4];
  const auto len = static_cast<std::uint32_t>(bytes.size());
  for (int b = 0; b < 4; ++b) prefix[b] = static_cast<std::uint8_t>(len >> (8 * b));
  write_all(out.fd, prefix, 4);
  write_all(out.fd, bytes.data(), bytes.size());
}

DeliveryReceipt SocketTransport::broadcast(const ParamFrame& frame) {
  check_endpoint(frame.sender, "sender");
  const auto bytes = encode_frame(frame);
  DeliveryReceipt receipt;
  for (AgentId r = 0; r < ports_.size(); ++r) {
    if (r == frame.sender) continue;
    send_bytes(r, bytes);
    {
      std::lock_guard lock(traffic_mutex_);
      traffic_.record_send(frame.round, frame.sender, bytes.size(), true);
    }
    ++receipt.deliveries;
    receipt.bytes += bytes.size();
  }
  return receipt;
}

DeliveryReceipt SocketTransport::send_to(const ParamFrame& frame, AgentId recipient) {
  check_endpoint(frame.sender, "sender");
  check_endpoint(recipient, "recipient");
  const auto bytes = encode_frame(frame);
  send_bytes(recipient, bytes);
  std::lock_guard lock(traffic_mutex_);
  traffic_.record_send(frame.round, frame.sender, bytes.size(), false);
  return DeliveryReceipt{1, bytes.size()};
}

// A round is either a refresh or an exchange round, so the round number alone
// identifies the phase on the receiving side.
GatherResult SocketTransport::gather_round(AgentId endpoint, const std::vector<AgentId>& expected, std::uint32_t round,
                                           Phase /*phase*/) {
  check_endpoint(endpoint, "endpoint");
  std::unique_lock lock(inbox_mutex_);
  auto& inbox = inboxes_[endpoint];
  arrived_.wait_for(lock, timeout_, [&] {
    auto it = inbox.rounds.find(round);
    if (expected.empty()) return true;
    if (it == inbox.rounds.end()) return false;
    return std::all_of(expected.begin(), expected.end(), [&](AgentId s) { return it->second.contains(s); });
  });
  GatherResult result;
  auto it = inbox.rounds.find(round);
  for (AgentId s : expected) {
    if (it != inbox.rounds.end()) {
      if (auto f = it->second.find(s); f != it->second.end()) {
        result.frames.emplace(s, f->second);
        continue;
      }
    }
    result.stale.push_back(s);
  }
  if (it != inbox.rounds.end()) inbox.rounds.erase(it);
  std::sort(result.stale.begin(), result.stale.end());
  return result;
}

TrafficReport SocketTransport::traffic() const {
  std::lock_guard lock(traffic_mutex_);
  return traffic_;
}

}  // namespace collab
