#include "kgnn/ps/transport.hpp"

#include <arpa/inet.h>
#include <netdb.h>
#include <netinet/in.h>
#include <netinet/tcp.h>
#include <poll.h>
#include <sys/socket.h>
#include <unistd.h>

#include <cerrno>
#include <cstring>

#include "kgnn/error.hpp"
#include "kgnn/log.hpp"

namespace kgnn::ps {

Endpoint parse_endpoint(const std::string& s) {
  const auto colon = s.rfind(':');
  if (colon == std::string::npos) throw ConfigError("runtime.endpoints", "expected host:port, got '" + s + "'");
  Endpoint e;
  e.host = s.substr(0, colon);
  try {
    const int port = std::stoi(s.substr(colon + 1));
    if (port < 0 || port > 65535) throw std::out_of_range("port");
    e.port = static_cast<std::uint16_t>(port);
  } catch (const std::exception&) {
    throw ConfigError("runtime.endpoints", "bad port in '" + s + "'");
  }
  return e;
}

std::string to_string(const Endpoint& e) { return e.host + ":" + std::to_string(e.port); }

bool read_exact(int fd, std::uint8_t* out, std::size_t n) {
  while (n > 0) {
    const ssize_t got = ::recv(fd, out, n, 0);
    if (got == 0) return false;
    if (got < 0) {
      if (errno == EINTR) continue;
      return false;
    }
    out += got;
    n -= static_cast<std::size_t>(got);
  }
  return true;
}

bool write_all(int fd, const std::uint8_t* data, std::size_t n) {
  while (n > 0) {
    const ssize_t sent = ::send(fd, data, n, MSG_NOSIGNAL);
    if (sent < 0) {
      if (errno == EINTR) continue;
      return false;
    }
    data += sent;
    n -= static_cast<std::size_t>(sent);
  }
  return true;
}

std::vector<std::uint8_t> read_frame(int fd) {
  std::vector<std::uint8_t> buf(kFrameHeader);
  if (!read_exact(fd, buf.data(), 4)) return {};
  const std::size_t total = *frame_size(buf);
  buf.resize(total);
  if (!read_exact(fd, buf.data() + 4, total - 4)) throw ProtocolError("connection closed mid-frame");
  return buf;
}

namespace {

int connect_once(const Endpoint& e) {
  addrinfo hints{};
  hints.ai_family = AF_INET;
  hints.ai_socktype = SOCK_STREAM;
  addrinfo* res = nullptr;
  if (::getaddrinfo(e.host.c_str(), std::to_string(e.port).c_str(), &hints, &res) != 0 || res == nullptr) return -1;
  int fd = ::socket(res->ai_family, res->ai_socktype, res->ai_protocol);
  if (fd >= 0 && ::connect(fd, res->ai_addr, res->ai_addrlen) != 0) {
    ::close(fd);
    fd = -1;
  }
  ::freeaddrinfo(res);
  if (fd >= 0) {
    int one = 1;
    ::setsockopt(fd, IPPROTO_TCP, TCP_NODELAY, &one, sizeof(one));
  }
  return fd;
}

}  // namespace

TcpChannel::TcpChannel(const Endpoint& endpoint, RetryPolicy retry) : peer_(to_string(endpoint)) {
  auto delay = retry.first_delay;
  for (int attempt = 1; attempt <= retry.attempts; ++attempt) {
    fd_ = connect_once(endpoint);
    if (fd_ >= 0) return;
    spdlog::debug("connect to {} failed (attempt {}/{})", peer_, attempt, retry.attempts);
    if (attempt < retry.attempts) {
      std::this_thread::sleep_for(delay);
      delay *= 2;
    }
  }
  throw ProtocolError("server " + peer_ + " unreachable after " + std::to_string(retry.attempts) + " attempts");
}

TcpChannel::~TcpChannel() {
  if (fd_ >= 0) ::close(fd_);
}

std::vector<std::uint8_t> TcpChannel::call(std::span<const std::uint8_t> frame) {
  if (!write_all(fd_, frame.data(), frame.size())) throw ProtocolError("send to " + peer_ + " failed");
  auto reply = read_frame(fd_);
  if (reply.empty()) throw ProtocolError("connection to " + peer_ + " closed");
  return reply;
}

TcpServer::TcpServer(FrameHandler& handler, const Endpoint& bind) : handler_(handler) {
  listen_fd_ = ::socket(AF_INET, SOCK_STREAM, 0);
  if (listen_fd_ < 0) throw ProtocolError("socket: " + std::string(std::strerror(errno)));
  int one = 1;
  ::setsockopt(listen_fd_, SOL_SOCKET, SO_REUSEADDR, &one, sizeof(one));
  sockaddr_in addr{};
  addr.sin_family = AF_INET;
  addr.sin_port = htons(bind.port);
  if (bind.host.empty() || bind.host == "0.0.0.0") {
    addr.sin_addr.s_addr = htonl(INADDR_ANY);
  } else if (bind.host == "localhost") {
    addr.sin_addr.s_addr = htonl(INADDR_LOOPBACK);
  } else if (::inet_pton(AF_INET, bind.host.c_str(), &addr.sin_addr) != 1) {
    ::close(listen_fd_);
    throw ConfigError("runtime.endpoints", "cannot bind to host '" + bind.host + "'");
  }
  if (::bind(listen_fd_, reinterpret_cast<sockaddr*>(&addr), sizeof(addr)) != 0 || ::listen(listen_fd_, 64) != 0) {
    const std::string why = std::strerror(errno);
    ::close(listen_fd_);
    throw ProtocolError("cannot listen on " + to_string(bind) + ": " + why);
  }
  socklen_t len = sizeof(addr);
  ::getsockname(listen_fd_, reinterpret_cast<sockaddr*>(&addr), &len);
  port_ = ntohs(addr.sin_port);
  acceptor_ = std::thread([this] { accept_loop(); });
}

TcpServer::~TcpServer() {
  stop();
  if (acceptor_.joinable()) acceptor_.join();
  std::vector<std::thread> threads;
  {
    std::lock_guard lock(mu_);
    for (int fd : connection_fds_) ::shutdown(fd, SHUT_RDWR);
    threads.swap(connections_);
  }
  for (auto& t : threads) t.join();
  for (int fd : connection_fds_) ::close(fd);
  ::close(listen_fd_);
}

void TcpServer::stop() { stopping_.store(true); }

void TcpServer::wait() {
  while (!stopping_.load() && !handler_.stopped()) std::this_thread::sleep_for(std::chrono::milliseconds(20));
}

void TcpServer::accept_loop() {
  while (!stopping_.load() && !handler_.stopped()) {
    pollfd p{listen_fd_, POLLIN, 0};
    if (::poll(&p, 1, 50) <= 0) continue;
    const int fd = ::accept(listen_fd_, nullptr, nullptr);
    if (fd < 0) continue;
    int one = 1;
    ::setsockopt(fd, IPPROTO_TCP, TCP_NODELAY, &one, sizeof(one));
    std::lock_guard lock(mu_);
    connection_fds_.push_back(fd);
    connections_.emplace_back([this, fd] { serve_connection(fd); });
  }
}

void TcpServer::serve_connection(int fd) {
  try {
    while (true) {
      auto frame = read_frame(fd);
      if (frame.empty()) break;
      const auto reply = handler_.handle(frame);
      if (!write_all(fd, reply.data(), reply.size())) break;
    }
  } catch (const std::exception& e) {
    spdlog::warn("connection closed: {}", e.what());
  }
  ::shutdown(fd, SHUT_RDWR);
  handler_.on_disconnect();
}

}  // namespace kgnn::ps
