#ifndef HOSL_TRANSPORT_HPP
#define HOSL_TRANSPORT_HPP

#include <cstdint>
#include <functional>
#include <memory>
#include <string>
#include <utility>
#include <vector>

#include "hosl/protocol.hpp"

namespace hosl {

// Clean end-of-stream at a frame boundary; anything else on the wire is a
// plain TransportError.
class TransportClosed : public TransportError {
 public:
  explicit TransportClosed(const std::string& what) : TransportError(what) {}
};

// Reliable, ordered, blocking, bidirectional frame pipe. Both realizations
// move the exact encoded frame bytes, so a tap sees identical traffic
// whether the peer is a thread or a socket.
class Transport {
 public:
  using FrameTap =
      std::function<void(bool outbound, const std::vector<std::uint8_t>&)>;

  virtual ~Transport() = default;

  virtual void send(const Message& m) = 0;
  // Blocks until a full frame is available; throws TransportClosed once the
  // peer has closed and all queued frames were drained.
  virtual Message recv() = 0;
  virtual void close() = 0;

  void set_tap(FrameTap tap) { tap_ = std::move(tap); }

 protected:
  void tap(bool outbound, const std::vector<std::uint8_t>& frame) const {
    if (tap_) tap_(outbound, frame);
  }

 private:
  FrameTap tap_;
};

// Two connected in-process endpoints backed by byte queues.
std::pair<std::unique_ptr<Transport>, std::unique_ptr<Transport>>
make_inproc_pair();

struct HostPort {
  std::string host;
  std::uint16_t port = 0;
};

HostPort parse_host_port(const std::string& spec);

// Blocking TCP connector; retries briefly so a loopback peer may still be
// binding.
std::unique_ptr<Transport> tcp_connect(const HostPort& addr);

class TcpListener {
 public:
  explicit TcpListener(const HostPort& addr);  // port 0 picks an ephemeral port
  ~TcpListener();
  TcpListener(const TcpListener&) = delete;
  TcpListener& operator=(const TcpListener&) = delete;

  std::uint16_t port() const { return port_; }
  std::unique_ptr<Transport> accept();
  void close();

 private:
  int fd_ = -1;
  std::uint16_t port_ = 0;
};

}  // namespace hosl

#endif  // HOSL_TRANSPORT_HPP
