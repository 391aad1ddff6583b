#include <doctest.h>

#include <thread>
#include <vector>

#include "hosl/transport.hpp"

using namespace hosl;

namespace {

void exercise_fifo(Transport& a, Transport& b) {
  a.send(LossReplyMsg{1.0});
  a.send(LossReplyMsg{2.0});
  a.send(AckMsg{});
  CHECK(std::get<LossReplyMsg>(b.recv()).value == 1.0);
  CHECK(std::get<LossReplyMsg>(b.recv()).value == 2.0);
  CHECK(std::holds_alternative<AckMsg>(b.recv()));
  // And the other direction.
  b.send(LossReplyMsg{3.0});
  CHECK(std::get<LossReplyMsg>(a.recv()).value == 3.0);
}

}  // namespace

TEST_CASE("inproc pair delivers frames in order, both directions") {
  auto [a, b] = make_inproc_pair();
  exercise_fifo(*a, *b);
}

TEST_CASE("tcp loopback delivers frames in order, both directions") {
  TcpListener listener({"127.0.0.1", 0});
  auto client = tcp_connect({"127.0.0.1", listener.port()});
  auto server = listener.accept();
  exercise_fifo(*client, *server);
}

TEST_CASE("recv on a closed connection raises, never hangs") {
  SUBCASE("inproc") {
    auto [a, b] = make_inproc_pair();
    a->send(AckMsg{});
    a->close();
    CHECK(std::holds_alternative<AckMsg>(b->recv()));  // drains the queue
    CHECK_THROWS_AS(b->recv(), TransportClosed);
  }
  SUBCASE("tcp") {
    TcpListener listener({"127.0.0.1", 0});
    auto client = tcp_connect({"127.0.0.1", listener.port()});
    auto server = listener.accept();
    client->send(AckMsg{});
    client->close();
    CHECK(std::holds_alternative<AckMsg>(server->recv()));
    CHECK_THROWS_AS(server->recv(), TransportClosed);
  }
}

TEST_CASE("blocking recv wakes when the peer sends from another thread") {
  auto [a, b] = make_inproc_pair();
  std::thread sender([&a] {
    std::this_thread::sleep_for(std::chrono::milliseconds(20));
    a->send(LossReplyMsg{9.0});
  });
  CHECK(std::get<LossReplyMsg>(b->recv()).value == 9.0);
  sender.join();
}

TEST_CASE("taps observe identical bytes on both endpoints") {
  auto [a, b] = make_inproc_pair();
  std::vector<std::uint8_t> sent, received;
  a->set_tap([&](bool outbound, const std::vector<std::uint8_t>& f) {
    if (outbound) sent.insert(sent.end(), f.begin(), f.end());
  });
  b->set_tap([&](bool outbound, const std::vector<std::uint8_t>& f) {
    if (!outbound) received.insert(received.end(), f.begin(), f.end());
  });
  a->send(LossReplyMsg{0.5});
  a->send(AckMsg{});
  b->recv();
  b->recv();
  CHECK(sent == received);
  CHECK(sent.size() == 18 + 10);
}

TEST_CASE("host:port parsing") {
  const HostPort hp = parse_host_port("127.0.0.1:8080");
  CHECK(hp.host == "127.0.0.1");
  CHECK(hp.port == 8080);
  CHECK(parse_host_port(":9000").host == "0.0.0.0");
  CHECK_THROWS_AS(parse_host_port("nocolon"), ConfigError);
  CHECK_THROWS_AS(parse_host_port("h:99999"), ConfigError);
  CHECK_THROWS_AS(parse_host_port("h:"), ConfigError);
}
