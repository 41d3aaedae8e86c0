#include <arpa/inet.h>
#include <netinet/in.h>
#include <sys/socket.h>
#include <unistd.h>

#include <chrono>
#include <cstdlib>
#include <future>
#include <random>
#include <string>
#include <thread>
#include <vector>

#include "doctest.h"
#include "json.hpp"
#include "oracles.hpp"
#include "vipatch/errors.hpp"
#include "vipatch/fixtures.hpp"
#include "vipatch/remote.hpp"

using namespace vipatch;
using nlohmann::json;

namespace {

RemoteEndpoint mock(const std::string& mode, int timeout_ms = 5000,
                    std::size_t in_flight = 1) {
  RemoteEndpoint e = parse_endpoint(std::string("stdio:") + MOCK_SERVER + " " +
                                    mode);
  e.timeout_ms = timeout_ms;
  e.max_in_flight = in_flight;
  return e;
}

ImagePair small_pair(std::uint64_t seed, int w = 12, int h = 9) {
  std::mt19937_64 rng(seed);
  std::uniform_int_distribution<int> b(0, 255);
  Image vis(w, h, 3), ir(w, h, 1);
  for (double& v : vis.data()) v = b(rng) / 255.0;
  for (double& v : ir.data()) v = b(rng) / 255.0;
  return ImagePair(vis, ir);
}

double ir_sum(const ImagePair& p) {
  double s = 0.0;
  for (double v : p.infrared().data()) s += v;
  return s;
}

// Single-connection line server answering every count request with 3.
class TcpCountServer {
 public:
  TcpCountServer() {
    listen_fd_ = ::socket(AF_INET, SOCK_STREAM, 0);
    sockaddr_in addr{};
    addr.sin_family = AF_INET;
    addr.sin_addr.s_addr = htonl(INADDR_LOOPBACK);
    addr.sin_port = 0;
    REQUIRE(::bind(listen_fd_, reinterpret_cast<sockaddr*>(&addr),
                   sizeof(addr)) == 0);
    REQUIRE(::listen(listen_fd_, 1) == 0);
    socklen_t len = sizeof(addr);
    ::getsockname(listen_fd_, reinterpret_cast<sockaddr*>(&addr), &len);
    port_ = ntohs(addr.sin_port);
    thread_ = std::thread([this] { serve(); });
  }
  ~TcpCountServer() {
    thread_.join();
    ::close(listen_fd_);
  }
  int port() const { return port_; }

 private:
  void serve() {
    const int fd = ::accept(listen_fd_, nullptr, nullptr);
    if (fd < 0) return;
    std::string buffer;
    char chunk[4096];
    for (;;) {
      const ssize_t n = ::read(fd, chunk, sizeof(chunk));
      if (n <= 0) break;
      buffer.append(chunk, static_cast<std::size_t>(n));
      for (auto nl = buffer.find('\n'); nl != std::string::npos;
           nl = buffer.find('\n')) {
        const json req = json::parse(buffer.substr(0, nl));
        buffer.erase(0, nl + 1);
        const std::string out =
            json{{"id", req["id"]}, {"ok", true}, {"count", 3}}.dump() + "\n";
        (void)::write(fd, out.data(), out.size());
      }
    }
    ::close(fd);
  }

  int listen_fd_ = -1;
  int port_ = 0;
  std::thread thread_;
};

}  // namespace

TEST_CASE("base64 round trip") {
  std::mt19937_64 rng(1);
  std::uniform_int_distribution<int> b(0, 255);
  for (std::size_t n = 0; n < 40; ++n) {
    std::vector<std::uint8_t> bytes(n);
    for (auto& v : bytes) v = static_cast<std::uint8_t>(b(rng));
    CHECK(base64_decode(base64_encode(bytes)) == bytes);
  }
  const std::string hello = "hello";
  CHECK(base64_encode(std::vector<std::uint8_t>(hello.begin(), hello.end())) ==
        "aGVsbG8=");
  CHECK_THROWS_AS(base64_decode("abc"), ProtocolError);
  CHECK_THROWS_AS(base64_decode("a$c="), ProtocolError);
}

TEST_CASE("endpoint parsing") {
  const RemoteEndpoint s = parse_endpoint("stdio:python3 adapter.py --x");
  CHECK(s.transport == Transport::kSubprocess);
  CHECK(s.address == "python3 adapter.py --x");
  const RemoteEndpoint t = parse_endpoint("tcp:localhost:9000");
  CHECK(t.transport == Transport::kTcp);
  CHECK(t.address == "localhost:9000");
  CHECK_THROWS_AS(parse_endpoint("http://x"), ConfigError);
  CHECK_THROWS_AS(parse_endpoint("tcp:nohostport"), ConfigError);
  CHECK_THROWS_AS(parse_endpoint("stdio:"), ConfigError);
  RemoteEndpoint bad = s;
  bad.max_in_flight = 0;
  CHECK_THROWS_AS(bad.validate(), ConfigError);
}

TEST_CASE("request and response encoding") {
  const ImagePair p = small_pair(2);
  const json req = make_request("17", Task::kSegmentation, p);
  CHECK(req["id"] == "17");
  CHECK(req["task"] == "segment");
  CHECK(req["width"] == 12);
  CHECK(req["height"] == 9);
  CHECK(decode_png(base64_decode(req["infrared_png_b64"].get<std::string>())) ==
        p.infrared());
  CHECK(parse_wire_task("fuse") == Task::kFusion);
  CHECK_THROWS_AS(parse_wire_task("detect"), ProtocolError);

  CHECK(std::get<double>(parse_response(
            {{"id", "1"}, {"ok", true}, {"count", 4.5}}, Task::kCounting, 2,
            2)) == 4.5);
  const std::vector<std::uint8_t> labels = {0, 1, 2, 3};
  const auto m = std::get<ClassMap>(parse_response(
      {{"id", "1"}, {"ok", true}, {"labels_b64", base64_encode(labels)}},
      Task::kSegmentation, 2, 2));
  CHECK(m.at(1, 1) == 3);
  CHECK_THROWS_AS(parse_response({{"id", "1"}, {"ok", true}}, Task::kCounting,
                                 2, 2),
                  ProtocolError);
  CHECK_THROWS_AS(parse_response({{"id", "1"}, {"ok", true}, {"count", "x"}},
                                 Task::kCounting, 2, 2),
                  ProtocolError);
  CHECK_THROWS_AS(
      parse_response({{"id", "1"}, {"ok", false}, {"error", "nope"}},
                     Task::kCounting, 2, 2),
      OracleError);
  CHECK_THROWS_AS(parse_response({{"id", "1"},
                                  {"ok", true},
                                  {"labels_b64", base64_encode(labels)}},
                                 Task::kSegmentation, 3, 2),
                  ProtocolError);
}

TEST_CASE("subprocess counting") {
  const RemoteModel constant(mock("count-const 7"), Task::kCounting);
  const ImagePair p = small_pair(3);
  CHECK(constant.count(p).count == 7.0);
  CHECK(!constant.count(p).density.has_value());
  CHECK(constant.count(p).count == 7.0);

  const RemoteModel sum(mock("count-ir-sum"), Task::kCounting);
  for (std::uint64_t s = 0; s < 5; ++s) {
    const ImagePair q = small_pair(10 + s);
    CHECK(sum.count(q).count == doctest::Approx(ir_sum(q)).epsilon(1e-12));
  }
}

TEST_CASE("protocol violations are reported") {
  const ImagePair p = small_pair(4);
  {
    const RemoteModel m(mock("segment-wrong-dims"), Task::kSegmentation);
    CHECK_THROWS_AS(m.segment(p), ProtocolError);
  }
  {
    const RemoteModel m(mock("malformed"), Task::kCounting);
    CHECK_THROWS_AS(m.count(p), ProtocolError);
  }
  {
    const RemoteModel m(mock("missing-field"), Task::kCounting);
    CHECK_THROWS_AS(m.count(p), ProtocolError);
  }
  {
    const RemoteModel m(mock("error"), Task::kCounting);
    try {
      m.count(p);
      CHECK(false);
    } catch (const ProtocolError&) {
      CHECK(false);
    } catch (const OracleError& e) {
      CHECK(std::string(e.what()).find("model exploded") != std::string::npos);
    }
  }
  {
    const RemoteModel m(mock("exit-after 1"), Task::kCounting);
    CHECK(m.count(p).count == 1.0);
    CHECK_THROWS_AS(m.count(p), ProtocolError);
  }
}

TEST_CASE("slow responses time out") {
  const RemoteModel m(mock("sleep 1500", 200), Task::kCounting);
  const auto start = std::chrono::steady_clock::now();
  CHECK_THROWS_AS(m.count(small_pair(5)), TimeoutError);
  CHECK(std::chrono::steady_clock::now() - start < std::chrono::seconds(1));
}

TEST_CASE("out-of-order responses are matched by id") {
  const RemoteModel m(mock("reorder 4", 5000, 4), Task::kCounting);
  CHECK(m.max_concurrency() == 4);
  std::vector<ImagePair> pairs;
  for (std::uint64_t s = 0; s < 4; ++s) pairs.push_back(small_pair(20 + s));
  std::vector<std::future<double>> results;
  for (const ImagePair& p : pairs) {
    results.push_back(std::async(std::launch::async,
                                 [&m, &p] { return m.count(p).count; }));
  }
  for (std::size_t i = 0; i < pairs.size(); ++i) {
    CHECK(results[i].get() == doctest::Approx(ir_sum(pairs[i])).epsilon(1e-12));
  }
}

TEST_CASE("tcp transport") {
  TcpCountServer server;
  RemoteEndpoint e =
      parse_endpoint("tcp:127.0.0.1:" + std::to_string(server.port()));
  {
    const RemoteModel m(e, Task::kCounting);
    CHECK(m.count(small_pair(6)).count == 3.0);
    CHECK(m.count(small_pair(7)).count == 3.0);
  }
}

TEST_CASE("unreachable endpoints raise IoError") {
  CHECK_THROWS_AS(RemoteModel(parse_endpoint("tcp:127.0.0.1:1"), Task::kCounting),
                  IoError);
}

TEST_CASE("remote surrogates agree with in-process surrogates") {
  const auto fixtures = make_fixtures(10, 99);
  const RemoteModel counter(mock("count-surrogate"), Task::kCounting);
  const RemoteModel fuser(mock("fuse-max"), Task::kFusion);
  const RemoteModel segmenter(mock("segment-surrogate"), Task::kSegmentation);
  for (const Fixture& f : fixtures) {
    CHECK(counter.count(f.pair).count == surrogate_count(f.pair).count);
    CHECK(encode_png(fuser.fuse(f.pair)) == encode_png(surrogate_fuse(f.pair)));
    CHECK(segmenter.segment(f.pair) == surrogate_segment(f.pair, 4));
  }
}

TEST_CASE("external adapter smoke test") {
  const char* cmd = std::getenv("VIPATCH_ADAPTER_CMD");
  if (cmd == nullptr || *cmd == '\0') {
    MESSAGE("VIPATCH_ADAPTER_CMD not set; skipping");
    return;
  }
  RemoteEndpoint e = parse_endpoint(std::string("stdio:") + cmd);
  e.timeout_ms = 120000;
  const RemoteModel m(e, Task::kCounting);
  const Fixture f = make_fixture(1, "smoke");
  const double c = m.count(f.pair).count;
  CHECK(c >= 0.0);
}
