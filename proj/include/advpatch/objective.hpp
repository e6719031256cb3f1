#pragma once

#include <cmath>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "advpatch/errors.hpp"
#include "advpatch/image.hpp"
#include "advpatch/oracle.hpp"
#include "advpatch/rng.hpp"
#include "advpatch/transforms.hpp"

namespace advpatch {

// u.v / (|u||v|), and 0 when either side is the zero vector.
inline double cosine_similarity(const EmbeddingVector& u, const EmbeddingVector& v) {
  if (u.dim() != v.dim()) throw InvalidArgument("cosine_similarity: dimension mismatch");
  double dot = 0.0, uu = 0.0, vv = 0.0;
  const auto a = u.components();
  const auto b = v.components();
  for (std::size_t i = 0; i < a.size(); ++i) {
    dot += a[i] * b[i];
    uu += a[i] * a[i];
    vv += b[i] * b[i];
  }
  if (uu == 0.0 || vv == 0.0) return 0.0;
  return std::clamp(dot / (std::sqrt(uu) * std::sqrt(vv)), -1.0, 1.0);
}

inline double semantic_loss(const EmbeddingVector& generated, const EmbeddingVector& target) {
  return 1.0 - cosine_similarity(generated, target);
}

inline double semantic_loss(std::string_view generated, std::string_view target, const TextEmbedder& embedder) {
  return semantic_loss(embedder.embed(generated), embedder.embed(target));
}

// Isotropic total variation of an interleaved plane of 0..255 values,
// normalised to [0, 1] and summed over channels. Forward differences; the last
// row/column contribute zero difference in the direction that would leave the grid.
inline double tv_norm(std::span<const double> values, int width, int height, int channels) {
  if (width < 1 || height < 1 || channels < 1 || values.size() != static_cast<std::size_t>(width) * height * channels)
    throw InvalidArgument("tv_norm: size does not match width*height*channels");
  const std::size_t ch = static_cast<std::size_t>(channels);
  const std::size_t row = static_cast<std::size_t>(width) * ch;
  const std::size_t h = static_cast<std::size_t>(height);
  const double* v = values.data();
  constexpr double inv = 1.0 / 255.0;
  double total = 0.0;
  for (std::size_t y = 0; y < h; ++y) {
    const double* cur = v + y * row;
    const double* below = y + 1 < h ? cur + row : cur;
    double acc = 0.0;
    for (std::size_t i = 0; i + ch < row; ++i) {
      const double down = (below[i] - cur[i]) * inv;
      const double right = (cur[i + ch] - cur[i]) * inv;
      acc += std::sqrt(down * down + right * right);
    }
    for (std::size_t i = row - ch; i < row; ++i) acc += std::abs((below[i] - cur[i]) * inv);
    total += acc;
  }
  return total;
}

inline double tv_norm(const Patch& p) { return tv_norm(p.values(), p.width(), p.height(), kChannels); }

struct ObjectiveConfig {
  std::string target_response;
  double lambda_tv = 0.001;
  int k_eot = 5;
  std::size_t embed_dim = kDefaultEmbedDim;

  void validate() const {
    if (!(lambda_tv >= 0.0)) throw InvalidConfiguration("objective.lambda_tv", "must be >= 0");
    if (k_eot < 1) throw InvalidConfiguration("objective.k_eot", "must be >= 1");
  }
};

// A background frame (no patch) with the patch's apparent rect and the
// oracle context for that frame.
struct SceneFrame {
  ImageBuffer background;
  PixelRect patch_rect;
  SceneContext ctx;
};

// Identifies one candidate evaluation inside an optimisation run.
struct EvalTag {
  std::uint64_t seed = 0;
  std::uint64_t iteration = 0;
  std::uint64_t candidate = 0;  // 2*direction + (0 for +, 1 for -)
  std::uint64_t direction = 0;
};

inline constexpr std::uint64_t kEotStreamTag = 0x656f74ULL;  // "eot"

// EoT stream for sample k. The antithetic pair of one direction shares its
// transforms (common random numbers), so only the patch differs between J+ and J-.
inline RngStream eot_stream(const EvalTag& tag, int k) {
  return RngStream(tag.seed, derive_stream_id({kEotStreamTag, tag.iteration, tag.direction, static_cast<std::uint64_t>(k)}));
}

class CandidateEvaluationError : public OracleError {
 public:
  CandidateEvaluationError(const EvalTag& tag, int k, const std::string& cause)
      : OracleError("oracle failure at iteration " + std::to_string(tag.iteration) + ", candidate " +
                    std::to_string(tag.candidate) + ", eot sample " + std::to_string(k) + ": " + cause),
        iteration_(tag.iteration),
        candidate_(tag.candidate),
        sample_(k) {}
  std::uint64_t iteration() const noexcept { return iteration_; }
  std::uint64_t candidate() const noexcept { return candidate_; }
  int sample() const noexcept { return sample_; }

 private:
  std::uint64_t iteration_;
  std::uint64_t candidate_;
  int sample_;
};

struct Evaluation {
  double value = 0.0;          // EoT mean semantic loss + lambda_tv * TV
  double semantic_mean = 0.0;
  double tv = 0.0;
  std::uint64_t oracle_queries = 0;
};

// J(theta) = (1/K) sum_k L_sem(oracle(T_k(composite(scene, theta))), target) + lambda_tv * TV(theta).
// Scene k is scenes[k mod scenes.size()], so a single scene reproduces the
// fixed-frame setup and several scenes give a frame mixture.
class CandidateObjective {
 public:
  CandidateObjective(std::vector<SceneFrame> scenes, ObjectiveConfig cfg, const DrivingOracle& oracle, const TextEmbedder& embedder,
                     std::string prompt = {})
      : scenes_(std::move(scenes)),
        cfg_(std::move(cfg)),
        oracle_(&oracle),
        embedder_(&embedder),
        prompt_(std::move(prompt)),
        target_embedding_(embedder.embed(cfg_.target_response)) {
    cfg_.validate();
    if (scenes_.empty()) throw InvalidArgument("CandidateObjective: at least one scene frame required");
  }

  const ObjectiveConfig& config() const noexcept { return cfg_; }
  std::uint64_t queries_per_evaluation() const noexcept { return static_cast<std::uint64_t>(cfg_.k_eot); }

  Evaluation evaluate(const Patch& patch, const EvalTag& tag) const {
    std::vector<double> losses(static_cast<std::size_t>(cfg_.k_eot));
    for (int k = 0; k < cfg_.k_eot; ++k) {
      const SceneFrame& scene = scenes_[static_cast<std::size_t>(k) % scenes_.size()];
      ImageBuffer frame = scene.background;
      composite_into(frame, patch, scene.patch_rect);
      RngStream rng = eot_stream(tag, k);
      const ImageBuffer seen = apply_transform(frame, sample_transform(rng));
      OracleResponse resp;
      try {
        resp = oracle_->describe(seen, scene.ctx, prompt_);
      } catch (const OracleError& e) {
        throw CandidateEvaluationError(tag, k, e.what());
      }
      losses[static_cast<std::size_t>(k)] = semantic_loss(embedder_->embed(resp.raw_text), target_embedding_);
    }
    Evaluation ev;
    double sum = 0.0;
    for (double l : losses) sum += l;  // fixed order
    ev.semantic_mean = sum / static_cast<double>(cfg_.k_eot);
    ev.tv = cfg_.lambda_tv > 0.0 ? tv_norm(patch) : 0.0;
    ev.value = ev.semantic_mean + cfg_.lambda_tv * ev.tv;
    ev.oracle_queries = static_cast<std::uint64_t>(cfg_.k_eot);
    return ev;
  }

 private:
  std::vector<SceneFrame> scenes_;
  ObjectiveConfig cfg_;
  const DrivingOracle* oracle_;
  const TextEmbedder* embedder_;
  std::string prompt_;
  EmbeddingVector target_embedding_;
};

}  // namespace advpatch
