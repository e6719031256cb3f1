#include <catch_amalgamated.hpp>

#include <algorithm>
#include <thread>

#include "advpatch/http_oracle.hpp"
#include "advpatch/nes.hpp"

using namespace advpatch;

namespace {

// httplib server on an ephemeral port, running on its own thread.
class TestServer {
 public:
  TestServer() {
    port_ = server_.bind_to_any_port("127.0.0.1");
    thread_ = std::thread([this] { server_.listen_after_bind(); });
    server_.wait_until_ready();
  }
  ~TestServer() {
    server_.stop();
    thread_.join();
  }
  httplib::Server& server() { return server_; }
  HttpOptions options() const {
    HttpOptions o;
    o.endpoint = "http://127.0.0.1:" + std::to_string(port_);
    o.timeout_s = 2.0;
    o.retry_backoff_s = 0.0;
    return o;
  }

 private:
  httplib::Server server_;
  int port_ = 0;
  std::thread thread_;
};

const ImageBuffer kImage = ImageBuffer::filled(4, 3, 10, 20, 30);

}  // namespace

TEST_CASE("describe round-trips the reply text byte for byte") {
  TestServer ts;
  std::string seen_body;
  const std::string reply = "Ünïcode \"quoted\" text\nwith a newline; the driver should turn right";
  ts.server().Post("/v1/describe", [&](const httplib::Request& req, httplib::Response& res) {
    seen_body = req.body;
    res.set_content(nlohmann::json{{"description", reply}}.dump(), "application/json");
  });
  const auto r = http_describe(ts.options(), kImage, "What should the driver do?", "crosswalk");
  CHECK(r.raw_text == reply);
  CHECK(r.parsed_action == Action::turn_right);
  CHECK(r.query_latency >= 0.0);
  CHECK(seen_body == detail::describe_request_body(kImage, "What should the driver do?", "crosswalk"));
}

TEST_CASE("embed renormalises and checks the dimension") {
  TestServer ts;
  ts.server().Post("/v1/embed", [&](const httplib::Request& req, httplib::Response& res) {
    const auto text = nlohmann::json::parse(req.body)["text"].get<std::string>();
    if (text.empty())
      res.set_content(R"({"vector":[0,0],"dim":2})", "application/json");
    else
      res.set_content(R"({"vector":[3,4],"dim":2})", "application/json");
  });
  const auto v = http_embed(ts.options(), "hello", 2);
  CHECK(v.components()[0] == Catch::Approx(0.6));
  CHECK(v.components()[1] == Catch::Approx(0.8));
  CHECK(http_embed(ts.options(), "", 2).is_zero());
  CHECK_THROWS_AS(http_embed(ts.options(), "hello", 3), ProtocolError);
  const HttpEmbedder emb(ts.options(), 2);
  CHECK(emb.dim() == 2);
}

TEST_CASE("non-2xx replies are remote errors carrying the body") {
  TestServer ts;
  ts.server().Post("/v1/describe", [](const httplib::Request&, httplib::Response& res) {
    res.status = 413;
    res.set_content(R"({"error":"image exceeds max bytes"})", "application/json");
  });
  try {
    http_describe(ts.options(), kImage, "p");
    FAIL("expected RemoteError");
  } catch (const RemoteError& e) {
    CHECK(e.status() == 413);
    CHECK(e.body().find("max bytes") != std::string::npos);
  }
}

TEST_CASE("malformed replies are protocol errors") {
  TestServer ts;
  ts.server().Post("/v1/describe", [](const httplib::Request&, httplib::Response& res) {
    res.set_content(R"({"text":"no description field"})", "application/json");
  });
  CHECK_THROWS_AS(http_describe(ts.options(), kImage, "p"), ProtocolError);
}

TEST_CASE("unreachable endpoints fail as retryable after the configured attempts") {
  int port = 0;
  {
    httplib::Server s;
    port = s.bind_to_any_port("127.0.0.1");
  }
  HttpOptions o;
  o.endpoint = "http://127.0.0.1:" + std::to_string(port);
  o.timeout_s = 0.5;
  o.max_retries = 2;
  o.retry_backoff_s = 0.0;
  try {
    http_describe(o, kImage, "p");
    FAIL("expected RetryableError");
  } catch (const RetryableError& e) {
    CHECK(std::string(e.what()).find("3 attempts") != std::string::npos);
  }
}

TEST_CASE("timeouts are retried and then reported as retryable") {
  TestServer ts;
  std::atomic<int> calls{0};
  ts.server().Post("/v1/describe", [&](const httplib::Request&, httplib::Response& res) {
    ++calls;
    std::this_thread::sleep_for(std::chrono::milliseconds(600));
    res.set_content(R"({"description":"late"})", "application/json");
  });
  auto o = ts.options();
  o.timeout_s = 0.2;
  o.max_retries = 1;
  CHECK_THROWS_AS(http_describe(o, kImage, "p"), RetryableError);
  CHECK(calls >= 1);
}

TEST_CASE("in-flight requests are bounded") {
  TestServer ts;
  std::atomic<int> in_flight{0}, peak{0};
  ts.server().Post("/v1/describe", [&](const httplib::Request&, httplib::Response& res) {
    const int now = ++in_flight;
    int p = peak.load();
    while (now > p && !peak.compare_exchange_weak(p, now)) {
    }
    std::this_thread::sleep_for(std::chrono::milliseconds(50));
    --in_flight;
    res.set_content(R"({"description":"ok"})", "application/json");
  });
  auto o = ts.options();
  o.max_in_flight = 2;
  const HttpOracle oracle(o);
  std::vector<OracleResponse> out(8);
  nes::parallel_for(8, 8, [&](std::size_t i) { out[i] = oracle.describe(kImage, SceneContext{}, "p"); });
  CHECK(peak <= 2);
  std::vector<std::uint64_t> ids;
  for (const auto& r : out) {
    CHECK(r.raw_text == "ok");
    ids.push_back(r.request_id);
  }
  std::sort(ids.begin(), ids.end());
  CHECK(std::adjacent_find(ids.begin(), ids.end()) == ids.end());
}
