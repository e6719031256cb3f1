#pragma once

#include <httplib.h>
#include <json.hpp>

#include <atomic>
#include <chrono>
#include <memory>
#include <semaphore>
#include <string>
#include <thread>

#include "advpatch/codec.hpp"
#include "advpatch/errors.hpp"
#include "advpatch/oracle.hpp"

namespace advpatch {

struct HttpOptions {
  std::string endpoint = "http://127.0.0.1:8080";  // scheme://host:port
  double timeout_s = 30.0;
  int max_retries = 2;  // additional attempts after the first
  double retry_backoff_s = 0.05;
  int max_in_flight = 8;
};

inline constexpr const char* kEndpointEnvVar = "ADVPATCH_ORACLE_ENDPOINT";

namespace detail {

// Wire bodies. Key order is alphabetical (nlohmann::json's default), which is
// what the golden fixtures pin.
inline std::string describe_request_body(const ImageBuffer& frame, std::string_view prompt, std::string_view scenario) {
  nlohmann::json j;
  j["image_png_b64"] = base64_encode(encode_png(frame));
  j["prompt"] = std::string(prompt);
  j["scenario"] = std::string(scenario);
  return j.dump();
}

inline std::string embed_request_body(std::string_view text) {
  nlohmann::json j;
  j["text"] = std::string(text);
  return j.dump();
}

inline std::string parse_describe_reply(const std::string& body) {
  const auto j = nlohmann::json::parse(body, nullptr, false);
  if (j.is_discarded() || !j.is_object()) throw ProtocolError("describe: reply is not a JSON object");
  const auto it = j.find("description");
  if (it == j.end() || !it->is_string()) throw ProtocolError("describe: reply missing string field \"description\"");
  return it->get<std::string>();
}

inline EmbeddingVector parse_embed_reply(const std::string& body, std::size_t expected_dim) {
  const auto j = nlohmann::json::parse(body, nullptr, false);
  if (j.is_discarded() || !j.is_object()) throw ProtocolError("embed: reply is not a JSON object");
  const auto v = j.find("vector");
  const auto d = j.find("dim");
  if (v == j.end() || !v->is_array()) throw ProtocolError("embed: reply missing array field \"vector\"");
  if (d == j.end() || !d->is_number_integer()) throw ProtocolError("embed: reply missing integer field \"dim\"");
  std::vector<double> comps;
  comps.reserve(v->size());
  for (const auto& x : *v) {
    if (!x.is_number()) throw ProtocolError("embed: non-numeric vector component");
    comps.push_back(x.get<double>());
  }
  if (comps.size() != d->get<std::size_t>()) throw ProtocolError("embed: vector length does not match \"dim\"");
  if (expected_dim != 0 && comps.size() != expected_dim)
    throw ProtocolError("embed: dim " + std::to_string(comps.size()) + " != configured " + std::to_string(expected_dim));
  return EmbeddingVector::normalized(std::move(comps));
}

// POST with bounded concurrency and retry on transport failures. Remote
// errors and protocol errors are not retried.
class HttpTransport {
 public:
  explicit HttpTransport(HttpOptions opts)
      : opts_(std::move(opts)), slots_(std::max(1, opts_.max_in_flight)) {}

  const HttpOptions& options() const noexcept { return opts_; }

  std::string post(const std::string& path, const std::string& body) const {
    slots_.acquire();
    struct Release {
      std::counting_semaphore<>& s;
      ~Release() { s.release(); }
    } release{slots_};

    std::string last_error;
    for (int attempt = 0; attempt <= opts_.max_retries; ++attempt) {
      if (attempt > 0 && opts_.retry_backoff_s > 0)
        std::this_thread::sleep_for(std::chrono::duration<double>(opts_.retry_backoff_s * attempt));
      httplib::Client cli(opts_.endpoint);
      const auto timeout = std::chrono::duration_cast<std::chrono::microseconds>(std::chrono::duration<double>(opts_.timeout_s));
      cli.set_connection_timeout(timeout);
      cli.set_read_timeout(timeout);
      cli.set_write_timeout(timeout);
      auto res = cli.Post(path, body, "application/json");
      if (!res) {
        last_error = httplib::to_string(res.error());
        continue;
      }
      if (res->status < 200 || res->status >= 300) throw RemoteError(res->status, res->body);
      return res->body;
    }
    throw RetryableError("POST " + opts_.endpoint + path + " failed after " + std::to_string(opts_.max_retries + 1) +
                         " attempts: " + last_error);
  }

 private:
  HttpOptions opts_;
  mutable std::counting_semaphore<> slots_;
};

}  // namespace detail

// Driving oracle reached over the /v1/describe wire protocol.
class HttpOracle final : public DrivingOracle {
 public:
  explicit HttpOracle(HttpOptions opts) : transport_(std::make_unique<detail::HttpTransport>(std::move(opts))) {}

  OracleResponse describe(const ImageBuffer& frame, const SceneContext& ctx, std::string_view prompt) const override {
    const auto id = next_id_.fetch_add(1) + 1;
    const auto t0 = std::chrono::steady_clock::now();
    const std::string reply = transport_->post("/v1/describe", detail::describe_request_body(frame, prompt, ctx.scenario));
    const double latency = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    return make_response(detail::parse_describe_reply(reply), latency, id);
  }

 private:
  std::unique_ptr<detail::HttpTransport> transport_;
  mutable std::atomic<std::uint64_t> next_id_{0};
};

// Text embedder reached over /v1/embed. Vectors are renormalised locally.
class HttpEmbedder final : public TextEmbedder {
 public:
  HttpEmbedder(HttpOptions opts, std::size_t dim) : transport_(std::make_unique<detail::HttpTransport>(std::move(opts))), dim_(dim) {}

  EmbeddingVector embed(std::string_view text) const override {
    return detail::parse_embed_reply(transport_->post("/v1/embed", detail::embed_request_body(text)), dim_);
  }
  std::size_t dim() const override { return dim_; }

 private:
  std::unique_ptr<detail::HttpTransport> transport_;
  std::size_t dim_;
};

inline OracleResponse http_describe(const HttpOptions& opts, const ImageBuffer& frame, std::string_view prompt,
                                    std::string_view scenario = "") {
  SceneContext ctx;
  ctx.scenario = std::string(scenario);
  return HttpOracle(opts).describe(frame, ctx, prompt);
}

inline EmbeddingVector http_embed(const HttpOptions& opts, std::string_view text, std::size_t dim = 0) {
  return HttpEmbedder(opts, dim).embed(text);
}

}  // namespace advpatch
