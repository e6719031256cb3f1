#pragma once

#include <cstdio>
#include <filesystem>
#include <memory>
#include <optional>
#include <stop_token>
#include <string>
#include <vector>

#include "advpatch/attack.hpp"
#include "advpatch/config.hpp"
#include "advpatch/http_oracle.hpp"
#include "advpatch/metrics.hpp"
#include "advpatch/run_io.hpp"

// Command-level workflows shared by the CLI and the acceptance checks.
namespace advpatch::pipeline {

namespace fs = std::filesystem;

enum ExitCode : int { kOk = 0, kVerifyFailed = 1, kConfigError = 2, kOracleFailure = 3, kInterrupted = 4 };

// Command-line values that take precedence over the config file.
struct Overrides {
  std::optional<OracleKind> oracle;
  std::optional<std::string> endpoint;
  std::optional<std::uint64_t> seed;
  std::optional<int> parallelism;
  std::optional<int> trials;
};

// A seed override reseeds both the NES streams and the initial patch.
inline void apply_overrides(RunConfig& c, const Overrides& o) {
  if (o.oracle) c.oracle.kind = *o.oracle;
  if (o.endpoint) c.oracle.http.endpoint = *o.endpoint;
  if (o.seed) c.attack.nes.seed = c.attack.init_seed = *o.seed;
  if (o.parallelism) c.attack.nes.parallelism = *o.parallelism;
  if (o.trials) c.evaluation.trials = *o.trials;
  validate(c);
}

struct Backends {
  std::unique_ptr<DrivingOracle> oracle;
  std::unique_ptr<TextEmbedder> embedder;
};

inline Backends make_backends(const RunConfig& c) {
  Backends b;
  if (c.oracle.kind == OracleKind::mock)
    b.oracle = std::make_unique<MockOracle>(c.oracle.mock);
  else
    b.oracle = std::make_unique<HttpOracle>(c.oracle.http);
  if (c.oracle.embedder == EmbedderKind::hash)
    b.embedder = std::make_unique<HashEmbedder>(c.attack.objective.embed_dim);
  else
    b.embedder = std::make_unique<HttpEmbedder>(c.oracle.http, c.attack.objective.embed_dim);
  return b;
}

inline std::string checkpoint_name(std::uint64_t iteration) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "patch_iter_%04llu.png", static_cast<unsigned long long>(iteration));
  return buf;
}

struct OptimizeOutcome {
  nes::OptResult opt;
  Patch best_patch;
  int exit_code = kOk;
};

// Writes config.json, checkpoints/, loss_history.csv, best_patch.{png,json},
// optimize.json and index.json. Files are written even when the oracle fails
// or the run is interrupted, so partial progress is kept.
inline OptimizeOutcome optimize_run(const RunConfig& cfg, const fs::path& out, const DrivingOracle& oracle, const TextEmbedder& embedder,
                                    std::stop_token stop = {}) {
  fs::create_directories(out / "checkpoints");
  io::write_json(out / "config.json", to_json(cfg));

  const auto sink = [&](const nes::OptState& s, const Patch& theta) {
    io::export_patch(out / "checkpoints" / checkpoint_name(s.iteration), theta,
                     {cfg.scenario.name, cfg.attack.nes.seed, s.iteration, s.best_loss, "checkpoint"});
  };
  AttackResult res = run_attack(cfg.scenario, cfg.attack, oracle, embedder, std::nullopt, sink, stop);
  const auto& st = res.opt.state;

  const std::uint64_t evals_per_iter = 2 * static_cast<std::uint64_t>(cfg.attack.nes.population_n);
  write_text_file(out / "loss_history.csv",
                  io::loss_history_csv(st, static_cast<std::uint64_t>(cfg.attack.objective.k_eot), evals_per_iter));
  const std::string status(nes::to_string(res.opt.status));
  io::export_patch(out / "best_patch.png", res.best_patch, {cfg.scenario.name, cfg.attack.nes.seed, st.iteration, st.best_loss, status});
  io::write_json(out / "optimize.json", {{"schema_version", kSchemaVersion},
                                         {"status", status},
                                         {"message", res.opt.message},
                                         {"iterations", st.iteration},
                                         {"best_loss", st.best_loss},
                                         {"candidate_evaluations", st.candidate_evals},
                                         {"oracle_queries", st.oracle_queries}});
  io::write_index(out);

  OptimizeOutcome o{std::move(res.opt), std::move(res.best_patch), kOk};
  if (o.opt.status == nes::Status::aborted) o.exit_code = kOracleFailure;
  if (o.opt.status == nes::Status::interrupted) o.exit_code = kInterrupted;
  return o;
}

// Loads a patch and checks it against the scenario's pixel size.
inline Patch load_patch_for(const ScenarioConfig& sc, const fs::path& png) {
  if (!fs::exists(png)) throw InvalidConfiguration("--patch", "file not found: " + png.string());
  Patch p = io::import_patch(png, sc.patch_width_m, sc.patch_height_m);
  if (p.width() != sc.patch_width_px || p.height() != sc.patch_height_px)
    throw InvalidConfiguration("--patch", "patch is " + std::to_string(p.width()) + "x" + std::to_string(p.height()) + ", scenario expects " +
                                              std::to_string(sc.patch_width_px) + "x" + std::to_string(sc.patch_height_px));
  return p;
}

inline std::string trial_id(Condition c, int i) {
  char buf[48];
  std::snprintf(buf, sizeof buf, "%s-%03d", std::string(to_string(c)).c_str(), i);
  return buf;
}

struct EvaluateOutcome {
  std::vector<TrialRecord> benign;
  std::vector<TrialRecord> adversarial;
  metrics::MetricsReport report;
  nlohmann::json metrics_json;
};

// Runs the benign arm and, given a patch, the adversarial arm, then writes
// config.json, trials.json, metrics.json, tables.csv, asr_distance.svg and
// index.json. Trials run concurrently; frames within a trial do not.
inline EvaluateOutcome evaluate_run(const RunConfig& cfg, const std::optional<Patch>& patch, const fs::path& out, const DrivingOracle& oracle,
                                    const TextEmbedder& embedder) {
  if (patch && (patch->width() != cfg.scenario.patch_width_px || patch->height() != cfg.scenario.patch_height_px))
    throw InvalidConfiguration("--patch", "patch dimensions do not match scenario patch_pixels");
  std::optional<std::vector<ExternalFrame>> external;
  if (!cfg.evaluation.frames_manifest.empty()) {
    try {
      external = load_frames(cfg.base_dir / cfg.evaluation.frames_manifest);
    } catch (const ValidationError& e) {
      throw InvalidConfiguration("evaluation.frames_manifest", e.what());
    }
  }
  TrialOptions topts;
  if (external) topts.external_frames = &*external;

  const int n = cfg.evaluation.trials;
  const std::optional<Patch> used = patch ? std::optional<Patch>(patch_from_image(quantize_patch(clip_patch(*patch)), patch->physical_width(), patch->physical_height())) : std::nullopt;
  const std::size_t arms = used ? 2 : 1;
  std::vector<TrialRecord> all(arms * static_cast<std::size_t>(n));
  nes::parallel_for(all.size(), cfg.attack.nes.parallelism, [&](std::size_t j) {
    const bool adv = j >= static_cast<std::size_t>(n);
    const int i = static_cast<int>(j % static_cast<std::size_t>(n));
    all[j] = run_trial(cfg.scenario, adv ? &*used : nullptr, oracle, trial_id(adv ? Condition::adversarial : Condition::benign, i), topts);
  });

  EvaluateOutcome o;
  o.benign.assign(all.begin(), all.begin() + n);
  if (used) o.adversarial.assign(all.begin() + n, all.end());
  for (const auto* arm : {&o.benign, &o.adversarial}) {
    if (arm->empty()) continue;
    if (metrics::success_count(*arm).frames == 0) {
      std::string cause;
      for (const auto& t : *arm)
        for (const auto& f : t.frames)
          if (f.query_failed && cause.empty()) cause = f.error;
      throw OracleError("no valid oracle responses in the " + std::string(to_string(arm->front().condition)) + " arm: " + cause);
    }
  }

  metrics::ReportOptions ropts;
  ropts.bin_edges = cfg.evaluation.bin_edges_m;
  ropts.key_distances = cfg.evaluation.key_distances_m;
  ropts.bootstrap_resamples = cfg.evaluation.bootstrap_resamples;
  ropts.bootstrap_seed = cfg.evaluation.bootstrap_seed;
  o.report = metrics::build_report(cfg.scenario, o.benign, o.adversarial, embedder, ropts);
  o.metrics_json = io::to_json(o.report);

  fs::create_directories(out);
  const std::string run_name = fs::absolute(out).lexically_normal().filename().string();
  io::write_json(out / "config.json", to_json(cfg));
  io::write_json(out / "trials.json", io::trials_json(o.benign, o.adversarial));
  io::write_json(out / "metrics.json", o.metrics_json);
  write_text_file(out / "tables.csv", std::string(io::kTablesHeader) + io::table_rows(o.metrics_json, run_name));
  write_text_file(out / "asr_distance.svg", io::asr_distance_svg({io::series_from_metrics(o.metrics_json, run_name)}));
  io::write_index(out);
  return o;
}

inline std::string dir_name(const fs::path& p) { return fs::absolute(p).lexically_normal().parent_path().filename().string(); }

// Merges the metrics.json of several run directories into one tables.csv and
// one SVG chart (a series per run) under `out`.
inline void report_runs(const std::vector<fs::path>& run_dirs, const fs::path& out) {
  if (run_dirs.empty()) throw InvalidConfiguration("runs", "no run directories given");
  std::string table = io::kTablesHeader;
  std::vector<io::ChartSeries> series;
  for (const auto& dir : run_dirs) {
    const fs::path mpath = dir / "metrics.json";
    if (!fs::exists(mpath)) throw InvalidConfiguration("runs", "missing " + mpath.string());
    const auto m = io::read_json(mpath);
    const int v = m.value("schema_version", -1);
    if (v != kSchemaVersion)
      throw InvalidConfiguration("schema_version", mpath.string() + " has schema version " + std::to_string(v) + ", this build reads version " +
                                                       std::to_string(kSchemaVersion));
    const std::string name = dir_name(mpath);
    table += io::table_rows(m, name);
    series.push_back(io::series_from_metrics(m, name));
  }
  fs::create_directories(out);
  write_text_file(out / "tables.csv", table);
  write_text_file(out / "asr_distance.svg", io::asr_distance_svg(series));
  io::write_index(out);
}

}  // namespace advpatch::pipeline
