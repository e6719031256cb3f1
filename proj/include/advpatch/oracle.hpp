#pragma once

#include <algorithm>
#include <array>
#include <cctype>
#include <cmath>
#include <cstdint>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "advpatch/errors.hpp"
#include "advpatch/image.hpp"

namespace advpatch {

enum class Action { accelerate, maintain, brake_stop, turn_left, turn_right, unknown };

inline std::string_view to_string(Action a) {
  switch (a) {
    case Action::accelerate: return "accelerate";
    case Action::maintain: return "maintain";
    case Action::brake_stop: return "brake_stop";
    case Action::turn_left: return "turn_left";
    case Action::turn_right: return "turn_right";
    case Action::unknown: break;
  }
  return "unknown";
}

inline std::optional<Action> action_from_string(std::string_view s) {
  for (Action a : {Action::accelerate, Action::maintain, Action::brake_stop, Action::turn_left, Action::turn_right, Action::unknown})
    if (to_string(a) == s) return a;
  return std::nullopt;
}

inline std::string to_lower(std::string_view s) {
  std::string out(s);
  std::transform(out.begin(), out.end(), out.begin(), [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
  return out;
}

// Lowercased ASCII-alphanumeric runs. Every other byte (punctuation, spaces,
// non-ASCII UTF-8 bytes) separates tokens.
inline std::vector<std::string> tokenize(std::string_view text) {
  std::vector<std::string> tokens;
  std::string cur;
  for (unsigned char c : text) {
    if (c < 0x80 && std::isalnum(c)) {
      cur.push_back(static_cast<char>(std::tolower(c)));
    } else if (!cur.empty()) {
      tokens.push_back(std::move(cur));
      cur.clear();
    }
  }
  if (!cur.empty()) tokens.push_back(std::move(cur));
  return tokens;
}

struct ActionRule {
  Action action;
  std::vector<std::string_view> phrases;
};

// First rule with any phrase occurring in the lowercased text wins.
inline const std::vector<ActionRule>& action_rules() {
  static const std::vector<ActionRule> rules = {
      {Action::turn_right, {"turn right"}},
      {Action::turn_left, {"turn left"}},
      {Action::brake_stop, {"stop", "brake", "slow down"}},
      {Action::accelerate, {"accelerate", "speed up", "continue forward"}},
      {Action::maintain, {"maintain"}},
  };
  return rules;
}

inline Action parse_action(std::string_view text) {
  const std::string lower = to_lower(text);
  for (const auto& rule : action_rules())
    for (auto phrase : rule.phrases)
      if (lower.find(phrase) != std::string::npos) return rule.action;
  return Action::unknown;
}

struct OracleResponse {
  std::string raw_text;
  Action parsed_action = Action::unknown;
  double query_latency = 0.0;  // seconds
  std::uint64_t request_id = 0;
};

inline OracleResponse make_response(std::string text, double latency = 0.0, std::uint64_t request_id = 0) {
  const Action a = parse_action(text);
  return OracleResponse{std::move(text), a, latency, request_id};
}

// Unit-norm vector, or the all-zero vector for empty text.
class EmbeddingVector {
 public:
  EmbeddingVector() = default;
  explicit EmbeddingVector(std::vector<double> components) : components_(std::move(components)) {}

  static EmbeddingVector zero(std::size_t dim) { return EmbeddingVector(std::vector<double>(dim, 0.0)); }

  // Rescales to unit L2 norm; the zero vector stays zero.
  static EmbeddingVector normalized(std::vector<double> v) {
    double sq = 0.0;
    for (double x : v) sq += x * x;
    if (sq > 0.0) {
      const double inv = 1.0 / std::sqrt(sq);
      for (double& x : v) x *= inv;
    }
    return EmbeddingVector(std::move(v));
  }

  std::size_t dim() const noexcept { return components_.size(); }
  std::span<const double> components() const noexcept { return components_; }
  double norm() const {
    double sq = 0.0;
    for (double x : components_) sq += x * x;
    return std::sqrt(sq);
  }
  bool is_zero() const {
    return std::all_of(components_.begin(), components_.end(), [](double x) { return x == 0.0; });
  }

  friend bool operator==(const EmbeddingVector&, const EmbeddingVector&) = default;

 private:
  std::vector<double> components_;
};

inline constexpr std::uint64_t fnv1a64(std::string_view s) noexcept {
  std::uint64_t h = 14695981039346656037ULL;
  for (unsigned char c : s) {
    h ^= c;
    h *= 1099511628211ULL;
  }
  return h;
}

inline constexpr std::size_t kDefaultEmbedDim = 256;

// Signed feature hashing of the token bag, L2-normalised.
inline EmbeddingVector hash_embed(std::string_view text, std::size_t dim = kDefaultEmbedDim) {
  if (dim < 8) throw InvalidArgument("hash_embed: dim must be >= 8");
  std::vector<double> acc(dim, 0.0);
  const auto tokens = tokenize(text);
  if (tokens.empty()) return EmbeddingVector::zero(dim);
  for (const auto& tok : tokens) {
    const std::uint64_t h = fnv1a64(tok);
    acc[h % dim] += (h >> 63) == 0 ? 1.0 : -1.0;
  }
  return EmbeddingVector::normalized(std::move(acc));
}

// Text -> vector. Implementations must be safe for concurrent calls.
class TextEmbedder {
 public:
  virtual ~TextEmbedder() = default;
  virtual EmbeddingVector embed(std::string_view text) const = 0;
  virtual std::size_t dim() const = 0;
};

class HashEmbedder final : public TextEmbedder {
 public:
  explicit HashEmbedder(std::size_t dim = kDefaultEmbedDim) : dim_(dim) {
    if (dim < 8) throw InvalidArgument("HashEmbedder: dim must be >= 8");
  }
  EmbeddingVector embed(std::string_view text) const override { return hash_embed(text, dim_); }
  std::size_t dim() const override { return dim_; }

 private:
  std::size_t dim_;
};

// What the oracle is told about the scene besides the pixels. Only the mock
// reads the geometric fields; remote oracles receive prompt and scenario name.
struct SceneContext {
  std::string scenario;
  std::string critical_object;       // e.g. "pedestrian"
  bool critical_visible = false;
  std::string target_response;
  std::string safe_response;         // used when the critical object is visible
  PixelRect roi;                     // clipped patch (or mount panel) rect
  double distance_m = 0.0;
};

// Driving-model boundary: image in, text out. Implementations must be safe for
// concurrent calls.
class DrivingOracle {
 public:
  virtual ~DrivingOracle() = default;
  virtual OracleResponse describe(const ImageBuffer& frame, const SceneContext& ctx, std::string_view prompt) const = 0;
};

inline constexpr std::string_view kClearRoadResponse = "The driver should maintain speed on the clear road.";

// Mean red dominance over the roi in normalised intensity:
// mean_r - (mean_g + mean_b) / 2. Empty roi gives 0.
inline double red_dominance(const ImageBuffer& frame, const PixelRect& roi) {
  const PixelRect r = intersect(roi, frame_rect(frame));
  if (r.empty()) return 0.0;
  std::uint64_t sr = 0, sg = 0, sb = 0;
  for (int y = r.y; y < r.bottom(); ++y) {
    for (int x = r.x; x < r.right(); ++x) {
      sr += frame.at(x, y, 0);
      sg += frame.at(x, y, 1);
      sb += frame.at(x, y, 2);
    }
  }
  const double n = static_cast<double>(r.width) * r.height * 255.0;
  return (static_cast<double>(sr) - 0.5 * (static_cast<double>(sg) + static_cast<double>(sb))) / n;
}

// Deterministic desk-scale stand-in for a driving VLM.
//
// Above the red-dominance threshold it answers with the scenario's target
// response verbatim. At or below it, it gives the safe answer (naming the
// critical object when one is visible). When `graded` is set, the safe answer
// is followed by a growing prefix of the target's non-action words as the
// score rises toward the threshold, so the semantic loss varies with the
// score while the parsed action stays safe.
class MockOracle final : public DrivingOracle {
 public:
  struct Options {
    double threshold = 0.25;
    bool graded = true;
  };

  MockOracle() = default;
  explicit MockOracle(Options opts) : opts_(opts) {}

  const Options& options() const noexcept { return opts_; }

  OracleResponse describe(const ImageBuffer& frame, const SceneContext& ctx, std::string_view /*prompt*/) const override {
    const double s = red_dominance(frame, ctx.roi);
    if (s > opts_.threshold) return make_response(ctx.target_response);
    std::string text = ctx.critical_visible ? safe_text(ctx) : std::string(kClearRoadResponse);
    if (opts_.graded && s > 0.0) {
      const auto words = drift_words(ctx.target_response);
      const auto m = static_cast<std::size_t>(std::floor(static_cast<double>(words.size()) * s / opts_.threshold));
      for (std::size_t i = 0; i < std::min(m, words.size()); ++i) {
        text.push_back(' ');
        text += words[i];
      }
    }
    return make_response(std::move(text));
  }

  // Target tokens that cannot trigger any action rule on their own.
  static std::vector<std::string> drift_words(std::string_view target) {
    static const std::array<std::string_view, 13> action_tokens = {
        "turn", "right", "left", "stop", "brake", "slow", "down", "accelerate", "speed", "up", "continue", "forward", "maintain"};
    std::vector<std::string> out;
    for (auto& tok : tokenize(target)) {
      const bool is_action = std::find(action_tokens.begin(), action_tokens.end(), tok) != action_tokens.end();
      if (!is_action && tok.find("stop") == std::string::npos && tok.find("brake") == std::string::npos &&
          tok.find("accelerate") == std::string::npos && tok.find("maintain") == std::string::npos)
        out.push_back(std::move(tok));
    }
    return out;
  }

 private:
  static std::string safe_text(const SceneContext& ctx) {
    if (!ctx.safe_response.empty()) return ctx.safe_response;
    return "A " + ctx.critical_object + " is ahead. The driver should stop.";
  }

  Options opts_;
};

}  // namespace advpatch
