#pragma once

#include <memory>
#include <optional>
#include <span>
#include <stop_token>
#include <vector>

#include "advpatch/image.hpp"
#include "advpatch/nes.hpp"
#include "advpatch/objective.hpp"
#include "advpatch/scenario.hpp"

namespace advpatch {

// Everything needed to optimise one patch against one scenario.
struct AttackConfig {
  ObjectiveConfig objective;
  nes::NesConfig nes;
  // Perturbation grid (cells across, cells down). {0, 0} draws independent
  // noise per patch value; otherwise noise is block-constant over the grid.
  int grid_w = 2;
  int grid_h = 2;
  // Distances whose frames form the EoT scene set; empty means the scenario's
  // optimisation distance.
  std::vector<double> scene_distances;
  std::uint64_t init_seed = 0;

  bool full_resolution() const { return grid_w == 0 || grid_h == 0; }
};

// Adapts CandidateObjective to the NES parameter space: values normalised to
// [0, 1] (sigma and alpha are expressed in these units).
class PatchObjective {
 public:
  PatchObjective(const CandidateObjective& objective, int width, int height, double physical_w, double physical_h)
      : objective_(&objective), width_(width), height_(height), physical_w_(physical_w), physical_h_(physical_h) {}

  Evaluation operator()(std::span<const double> x, const EvalTag& tag) const { return objective_->evaluate(to_patch(x), tag); }

  Patch to_patch(std::span<const double> x) const {
    std::vector<double> v(x.size());
    for (std::size_t i = 0; i < x.size(); ++i) v[i] = clip_value(x[i] * 255.0);
    return Patch(width_, height_, std::move(v), physical_w_, physical_h_);
  }

 private:
  const CandidateObjective* objective_;
  int width_, height_;
  double physical_w_, physical_h_;
};

inline std::vector<double> normalized_values(const Patch& p) {
  std::vector<double> x(p.values().begin(), p.values().end());
  for (double& v : x) v /= 255.0;
  return x;
}

inline std::unique_ptr<nes::PerturbationBasis> make_patch_basis(const AttackConfig& cfg, int width, int height) {
  if (cfg.full_resolution()) return std::make_unique<nes::IsotropicBasis>(static_cast<std::size_t>(width) * height * kChannels);
  return std::make_unique<nes::BlockBasis>(width, height, kChannels, std::min(cfg.grid_w, width), std::min(cfg.grid_h, height));
}

inline std::vector<SceneFrame> make_scene_frames(const ScenarioConfig& scenario, const AttackConfig& cfg) {
  std::vector<SceneFrame> scenes;
  if (cfg.scene_distances.empty()) {
    scenes.push_back(make_scene_frame(scenario, scenario.optimization_distance_m));
  } else {
    for (double d : cfg.scene_distances) scenes.push_back(make_scene_frame(scenario, d));
  }
  return scenes;
}

struct AttackResult {
  nes::OptResult opt;
  Patch best_patch;
};

using PatchCheckpointSink = std::function<void(const nes::OptState&, const Patch& theta)>;

// Optimises a patch for `scenario` starting from Gaussian noise (or `initial`).
inline AttackResult run_attack(const ScenarioConfig& scenario, AttackConfig cfg, const DrivingOracle& oracle, const TextEmbedder& embedder,
                               std::optional<Patch> initial = std::nullopt, const PatchCheckpointSink& sink = {},
                               std::stop_token stop = {}) {
  scenario.validate();
  if (cfg.objective.target_response.empty()) cfg.objective.target_response = scenario.target_response;
  cfg.nes.lower_bound = 0.0;
  cfg.nes.upper_bound = 1.0;
  const int w = scenario.patch_width_px;
  const int h = scenario.patch_height_px;
  Patch start = initial ? clip_patch(*initial)
                        : new_random_patch(cfg.init_seed, w, h, scenario.patch_width_m, scenario.patch_height_m);
  if (start.width() != w || start.height() != h) throw InvalidArgument("run_attack: initial patch size does not match scenario");

  const CandidateObjective objective(make_scene_frames(scenario, cfg), cfg.objective, oracle, embedder, scenario.prompt);
  const PatchObjective f(objective, w, h, scenario.patch_width_m, scenario.patch_height_m);
  const auto basis = make_patch_basis(cfg, w, h);

  nes::CheckpointSink state_sink;
  if (sink) state_sink = [&](const nes::OptState& s) { sink(s, f.to_patch(s.theta)); };
  nes::OptResult opt = nes::optimize(normalized_values(start), f, cfg.nes, *basis, state_sink, stop);
  Patch best = f.to_patch(opt.state.best_theta);
  return AttackResult{std::move(opt), std::move(best)};
}

}  // namespace advpatch
