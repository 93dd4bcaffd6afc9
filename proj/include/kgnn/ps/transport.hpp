#pragma once

#include <atomic>
#include <chrono>
#include <cstdint>
#include <memory>
#include <mutex>
#include <span>
#include <string>
#include <thread>
#include <vector>

#include "kgnn/ps/shard.hpp"

namespace kgnn::ps {

// Synchronous request/reply over one connection.
class Channel {
 public:
  virtual ~Channel() = default;
  virtual std::vector<std::uint8_t> call(std::span<const std::uint8_t> frame) = 0;
};

// Calls the handler directly; the bytes are exactly those a TCP peer would see.
class InProcessChannel : public Channel {
 public:
  explicit InProcessChannel(FrameHandler& handler) : handler_(handler) {}
  std::vector<std::uint8_t> call(std::span<const std::uint8_t> frame) override { return handler_.handle(frame); }

 private:
  FrameHandler& handler_;
};

struct Endpoint {
  std::string host;
  std::uint16_t port = 0;
};
Endpoint parse_endpoint(const std::string& s);
std::string to_string(const Endpoint& e);

struct RetryPolicy {
  int attempts = 5;
  std::chrono::milliseconds first_delay{100};
};

class TcpChannel : public Channel {
 public:
  // Connects with bounded exponential backoff; throws ProtocolError after the last attempt.
  explicit TcpChannel(const Endpoint& endpoint, RetryPolicy retry = {});
  ~TcpChannel() override;
  TcpChannel(const TcpChannel&) = delete;
  TcpChannel& operator=(const TcpChannel&) = delete;

  std::vector<std::uint8_t> call(std::span<const std::uint8_t> frame) override;

 private:
  int fd_ = -1;
  std::string peer_;
};

// Accepts connections and serves each on its own thread until the handler stops.
class TcpServer {
 public:
  // port 0 picks a free port; see port().
  TcpServer(FrameHandler& handler, const Endpoint& bind);
  ~TcpServer();
  TcpServer(const TcpServer&) = delete;
  TcpServer& operator=(const TcpServer&) = delete;

  std::uint16_t port() const { return port_; }
  // Blocks until the handler reports stopped() or stop() is called.
  void wait();
  void stop();

 private:
  void accept_loop();
  void serve_connection(int fd);

  FrameHandler& handler_;
  int listen_fd_ = -1;
  std::uint16_t port_ = 0;
  std::atomic<bool> stopping_{false};
  std::thread acceptor_;
  std::mutex mu_;
  std::vector<std::thread> connections_;
  std::vector<int> connection_fds_;
};

// Reads or writes exactly n bytes; false on EOF or error.
bool read_exact(int fd, std::uint8_t* out, std::size_t n);
bool write_all(int fd, const std::uint8_t* data, std::size_t n);
// Reads one whole frame; empty vector on clean EOF before the header.
std::vector<std::uint8_t> read_frame(int fd);

}  // namespace kgnn::ps
