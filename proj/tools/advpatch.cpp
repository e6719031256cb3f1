// advpatch: optimise, evaluate, report and verify adversarial-patch runs.

#include <CLI11.hpp>

#include <atomic>
#include <chrono>
#include <csignal>
#include <cstdlib>
#include <iostream>
#include <thread>

#include "advpatch/pipeline.hpp"

namespace fs = std::filesystem;
using namespace advpatch;
namespace pl = advpatch::pipeline;

namespace {

volatile std::sig_atomic_t g_interrupted = 0;

void on_signal(int) { g_interrupted = 1; }

// Turns SIGINT/SIGTERM into a stop request; the optimiser finishes the
// current iteration, writes its checkpoint and returns.
class InterruptWatch {
 public:
  InterruptWatch() {
    std::signal(SIGINT, on_signal);
    std::signal(SIGTERM, on_signal);
    watcher_ = std::jthread([this](std::stop_token own) {
      while (!own.stop_requested()) {
        if (g_interrupted) {
          source_.request_stop();
          return;
        }
        std::this_thread::sleep_for(std::chrono::milliseconds(50));
      }
    });
  }
  std::stop_token token() const { return source_.get_token(); }

 private:
  std::stop_source source_;
  std::jthread watcher_;
};

struct CommonFlags {
  std::string config;
  std::string oracle;
  std::string endpoint;
  std::uint64_t seed = 0;
  int parallelism = 0;
  std::string out;
};

void add_common(CLI::App* cmd, CommonFlags& f, CLI::Option*& seed_opt, CLI::Option*& par_opt) {
  cmd->add_option("--config", f.config, "Run configuration (JSON); built-in defaults when omitted")->check(CLI::ExistingFile);
  cmd->add_option("--oracle", f.oracle, "Driving-model oracle")->check(CLI::IsMember({"mock", "http"}));
  cmd->add_option("--endpoint", f.endpoint, std::string("Oracle endpoint URL (default: $") + kEndpointEnvVar + ")");
  seed_opt = cmd->add_option("--seed", f.seed, "Seed for NES streams and the initial patch");
  par_opt = cmd->add_option("--parallelism", f.parallelism, "Worker threads")->check(CLI::PositiveNumber);
  cmd->add_option("--out", f.out, "Output run directory")->required();
}

RunConfig resolve_config(const CommonFlags& f, const CLI::Option* seed_opt, const CLI::Option* par_opt, std::optional<int> trials) {
  RunConfig cfg = f.config.empty() ? parse_run_config(nlohmann::json::object()) : load_run_config(f.config);
  pl::Overrides o;
  if (!f.oracle.empty()) o.oracle = f.oracle == "http" ? OracleKind::http : OracleKind::mock;
  if (!f.endpoint.empty()) {
    o.endpoint = f.endpoint;
  } else if (const char* env = std::getenv(kEndpointEnvVar); env && *env) {
    o.endpoint = env;
  }
  if (*seed_opt) o.seed = f.seed;
  if (*par_opt) o.parallelism = f.parallelism;
  o.trials = trials;
  pl::apply_overrides(cfg, o);
  return cfg;
}

template <class Fn>
int guarded(Fn&& fn) {
  try {
    return fn();
  } catch (const InvalidConfiguration& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return pl::kConfigError;
  } catch (const OracleError& e) {
    std::cerr << "oracle failure: " << e.what() << "\n";
    return pl::kOracleFailure;
  } catch (const ValidationError& e) {
    std::cerr << "invalid input: " << e.what() << "\n";
    return pl::kConfigError;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Black-box adversarial patch optimisation and evaluation"};
  app.require_subcommand(1);

  CommonFlags opt_flags;
  CLI::Option *opt_seed = nullptr, *opt_par = nullptr;
  auto* optimize = app.add_subcommand("optimize", "Optimise a patch with NES and write a run directory");
  add_common(optimize, opt_flags, opt_seed, opt_par);

  CommonFlags ev_flags;
  CLI::Option *ev_seed = nullptr, *ev_par = nullptr;
  std::string patch_path;
  bool benign = false;
  int trials = 0;
  auto* evaluate = app.add_subcommand("evaluate", "Run benign and adversarial trials and compute metrics");
  add_common(evaluate, ev_flags, ev_seed, ev_par);
  auto* patch_opt = evaluate->add_option("--patch", patch_path, "Patch PNG to evaluate");
  auto* benign_opt = evaluate->add_flag("--benign", benign, "Benign trials only (no patch)");
  patch_opt->excludes(benign_opt);
  auto* trials_opt = evaluate->add_option("--trials", trials, "Trials per condition")->check(CLI::PositiveNumber);

  std::vector<std::string> runs;
  std::string report_out;
  auto* report = app.add_subcommand("report", "Merge run directories into tables.csv and an ASR-by-distance SVG");
  report->add_option("runs", runs, "Run directories");
  report->add_option("--out", report_out, "Output directory")->required();

  std::string verify_dir;
  auto* verify = app.add_subcommand("verify", "Recompute the content hashes listed in a run's index.json");
  verify->add_option("dir", verify_dir, "Run directory")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? 0 : pl::kConfigError;
  }

  if (*optimize) {
    return guarded([&] {
      const RunConfig cfg = resolve_config(opt_flags, opt_seed, opt_par, std::nullopt);
      const auto backends = pl::make_backends(cfg);
      InterruptWatch watch;
      const auto o = pl::optimize_run(cfg, opt_flags.out, *backends.oracle, *backends.embedder, watch.token());
      const auto& st = o.opt.state;
      std::cout << "status " << nes::to_string(o.opt.status) << "\n"
                << "iterations " << st.iteration << "\n"
                << "best_loss " << st.best_loss << "\n"
                << "candidate_evaluations " << st.candidate_evals << "\n"
                << "oracle_queries " << st.oracle_queries << "\n"
                << "best_patch " << (fs::path(opt_flags.out) / "best_patch.png").string() << "\n";
      if (!o.opt.message.empty()) std::cerr << o.opt.message << "\n";
      return o.exit_code;
    });
  }

  if (*evaluate) {
    return guarded([&] {
      if (!*patch_opt && !benign) throw InvalidConfiguration("--patch", "give --patch PNG or --benign");
      const RunConfig cfg = resolve_config(ev_flags, ev_seed, ev_par, *trials_opt ? std::optional<int>(trials) : std::nullopt);
      std::optional<Patch> patch;
      if (!benign) patch = pl::load_patch_for(cfg.scenario, patch_path);
      const auto backends = pl::make_backends(cfg);
      const auto o = pl::evaluate_run(cfg, patch, ev_flags.out, *backends.oracle, *backends.embedder);
      std::cout << "baseline_rate " << o.report.baseline_rate << "\n";
      if (o.report.adversarial) std::cout << "asr " << o.report.adversarial->asr << "\n";
      if (o.report.significance) std::cout << "p_value " << o.report.significance->p_value << "\n";
      std::cout << "metrics " << (fs::path(ev_flags.out) / "metrics.json").string() << "\n";
      return static_cast<int>(pl::kOk);
    });
  }

  if (*report) {
    return guarded([&] {
      std::vector<fs::path> dirs(runs.begin(), runs.end());
      pl::report_runs(dirs, report_out);
      std::cout << "report " << report_out << "\n";
      return static_cast<int>(pl::kOk);
    });
  }

  return guarded([&] {
    const auto v = io::verify_index(verify_dir);
    for (const auto& p : v.problems) std::cerr << p << "\n";
    std::cout << (v.ok ? "ok" : "FAILED") << "\n";
    return v.ok ? static_cast<int>(pl::kOk) : static_cast<int>(pl::kVerifyFailed);
  });
}
