#include "hosl/transport.hpp"

#include <arpa/inet.h>
#include <netdb.h>
#include <netinet/in.h>
#include <netinet/tcp.h>
#include <sys/socket.h>
#include <unistd.h>

#include <atomic>
#include <cerrno>
#include <chrono>
#include <condition_variable>
#include <cstring>
#include <deque>
#include <mutex>
#include <thread>

namespace hosl {

namespace {

struct ByteQueue {
  std::mutex mu;
  std::condition_variable cv;
  std::deque<std::vector<std::uint8_t>> frames;
  bool closed = false;

  void push(std::vector<std::uint8_t> frame) {
    {
      std::lock_guard<std::mutex> lk(mu);
      if (closed) throw TransportError("send on closed transport");
      frames.push_back(std::move(frame));
    }
    cv.notify_one();
  }

  std::vector<std::uint8_t> pop() {
    std::unique_lock<std::mutex> lk(mu);
    cv.wait(lk, [this] { return !frames.empty() || closed; });
    if (frames.empty()) throw TransportClosed("peer closed");
    auto f = std::move(frames.front());
    frames.pop_front();
    return f;
  }

  void close() {
    {
      std::lock_guard<std::mutex> lk(mu);
      closed = true;
    }
    cv.notify_all();
  }
};

class InprocTransport final : public Transport {
 public:
  InprocTransport(std::shared_ptr<ByteQueue> tx, std::shared_ptr<ByteQueue> rx)
      : tx_(std::move(tx)), rx_(std::move(rx)) {}

  ~InprocTransport() override { close(); }

  void send(const Message& m) override {
    std::vector<std::uint8_t> frame = encode(m);
    tap(true, frame);
    tx_->push(std::move(frame));
  }

  Message recv() override {
    const std::vector<std::uint8_t> frame = rx_->pop();
    tap(false, frame);
    return decode(frame);
  }

  void close() override {
    tx_->close();
    rx_->close();
  }

 private:
  std::shared_ptr<ByteQueue> tx_;
  std::shared_ptr<ByteQueue> rx_;
};

class TcpTransport final : public Transport {
 public:
  explicit TcpTransport(int fd) : fd_(fd) {
    int one = 1;
    ::setsockopt(fd_, IPPROTO_TCP, TCP_NODELAY, &one, sizeof(one));
  }

  ~TcpTransport() override { close(); }

  void send(const Message& m) override {
    const std::vector<std::uint8_t> frame = encode(m);
    tap(true, frame);
    std::size_t off = 0;
    while (off < frame.size()) {
      const ssize_t n = ::send(fd_, frame.data() + off, frame.size() - off,
                               MSG_NOSIGNAL);
      if (n <= 0) {
        if (n < 0 && errno == EINTR) continue;
        throw TransportError("tcp send failed: " +
                             std::string(std::strerror(errno)));
      }
      off += static_cast<std::size_t>(n);
    }
  }

  Message recv() override {
    std::vector<std::uint8_t> frame(kFrameHeaderBytes);
    read_exact(frame.data(), kFrameHeaderBytes, /*boundary=*/true);
    const std::uint32_t payload_len = parse_header(frame);
    frame.resize(kFrameHeaderBytes + payload_len);
    read_exact(frame.data() + kFrameHeaderBytes, payload_len,
               /*boundary=*/false);
    tap(false, frame);
    return decode(frame);
  }

  void close() override {
    int fd = fd_.exchange(-1);
    if (fd >= 0) {
      ::shutdown(fd, SHUT_RDWR);
      ::close(fd);
    }
  }

 private:
  void read_exact(std::uint8_t* buf, std::size_t n, bool boundary) {
    std::size_t off = 0;
    while (off < n) {
      const ssize_t r = ::recv(fd_, buf + off, n - off, 0);
      if (r == 0) {
        if (boundary && off == 0) throw TransportClosed("peer closed");
        throw TransportError("connection lost mid-frame");
      }
      if (r < 0) {
        if (errno == EINTR) continue;
        if (fd_ < 0) throw TransportClosed("transport closed locally");
        throw TransportError("tcp recv failed: " +
                             std::string(std::strerror(errno)));
      }
      off += static_cast<std::size_t>(r);
    }
  }

  std::atomic<int> fd_;
};

sockaddr_in resolve(const HostPort& addr) {
  sockaddr_in sa{};
  sa.sin_family = AF_INET;
  sa.sin_port = htons(addr.port);
  if (::inet_pton(AF_INET, addr.host.c_str(), &sa.sin_addr) == 1) return sa;
  addrinfo hints{};
  hints.ai_family = AF_INET;
  hints.ai_socktype = SOCK_STREAM;
  addrinfo* res = nullptr;
  if (::getaddrinfo(addr.host.c_str(), nullptr, &hints, &res) != 0 || !res) {
    throw TransportError("cannot resolve host " + addr.host);
  }
  sa.sin_addr = reinterpret_cast<sockaddr_in*>(res->ai_addr)->sin_addr;
  ::freeaddrinfo(res);
  return sa;
}

}  // namespace

std::pair<std::unique_ptr<Transport>, std::unique_ptr<Transport>>
make_inproc_pair() {
  auto a_to_b = std::make_shared<ByteQueue>();
  auto b_to_a = std::make_shared<ByteQueue>();
  return {std::make_unique<InprocTransport>(a_to_b, b_to_a),
          std::make_unique<InprocTransport>(b_to_a, a_to_b)};
}

HostPort parse_host_port(const std::string& spec) {
  const auto colon = spec.rfind(':');
  if (colon == std::string::npos || colon + 1 >= spec.size()) {
    throw ConfigError("expected host:port, got '" + spec + "'");
  }
  HostPort hp;
  hp.host = spec.substr(0, colon);
  if (hp.host.empty()) hp.host = "0.0.0.0";
  const std::string port_str = spec.substr(colon + 1);
  char* end = nullptr;
  const long port = std::strtol(port_str.c_str(), &end, 10);
  if (*end != '\0' || port < 0 || port > 65535) {
    throw ConfigError("invalid port '" + port_str + "'");
  }
  hp.port = static_cast<std::uint16_t>(port);
  return hp;
}

std::unique_ptr<Transport> tcp_connect(const HostPort& addr) {
  const sockaddr_in sa = resolve(addr);
  const auto deadline =
      std::chrono::steady_clock::now() + std::chrono::seconds(10);
  for (;;) {
    const int fd = ::socket(AF_INET, SOCK_STREAM, 0);
    if (fd < 0) throw TransportError("socket() failed");
    if (::connect(fd, reinterpret_cast<const sockaddr*>(&sa), sizeof(sa)) ==
        0) {
      return std::make_unique<TcpTransport>(fd);
    }
    ::close(fd);
    if (std::chrono::steady_clock::now() >= deadline) {
      throw TransportError("cannot connect to " + addr.host + ":" +
                           std::to_string(addr.port) + ": " +
                           std::string(std::strerror(errno)));
    }
    std::this_thread::sleep_for(std::chrono::milliseconds(20));
  }
}

TcpListener::TcpListener(const HostPort& addr) {
  fd_ = ::socket(AF_INET, SOCK_STREAM, 0);
  if (fd_ < 0) throw TransportError("socket() failed");
  int one = 1;
  ::setsockopt(fd_, SOL_SOCKET, SO_REUSEADDR, &one, sizeof(one));
  sockaddr_in sa = resolve(addr);
  if (::bind(fd_, reinterpret_cast<const sockaddr*>(&sa), sizeof(sa)) != 0) {
    throw TransportError("bind to " + addr.host + ":" +
                         std::to_string(addr.port) + " failed: " +
                         std::string(std::strerror(errno)));
  }
  if (::listen(fd_, 1) != 0) throw TransportError("listen() failed");
  sockaddr_in bound{};
  socklen_t len = sizeof(bound);
  ::getsockname(fd_, reinterpret_cast<sockaddr*>(&bound), &len);
  port_ = ntohs(bound.sin_port);
}

TcpListener::~TcpListener() { close(); }

std::unique_ptr<Transport> TcpListener::accept() {
  const int fd = ::accept(fd_, nullptr, nullptr);
  if (fd < 0) throw TransportError("accept() failed");
  return std::make_unique<TcpTransport>(fd);
}

void TcpListener::close() {
  if (fd_ >= 0) {
    ::close(fd_);
    fd_ = -1;
  }
}

}  // namespace hosl
