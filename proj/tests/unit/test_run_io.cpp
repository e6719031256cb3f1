#include <catch_amalgamated.hpp>

#include <regex>

#include "advpatch/pipeline.hpp"

using namespace advpatch;
namespace fs = std::filesystem;
namespace pl = advpatch::pipeline;

namespace {

struct TempDir {
  fs::path path;
  explicit TempDir(const std::string& name) : path(fs::temp_directory_path() / name) {
    fs::remove_all(path);
    fs::create_directories(path);
  }
  ~TempDir() { fs::remove_all(path); }
};

// Small, fast configuration: 160x90 frames, 16x16 patch, few iterations.
RunConfig tiny_config() {
  RunConfig c = parse_run_config({{"scenario", {{"camera", {{"image_width", 160}, {"image_height", 90}}}, {"patch_pixels", {16, 16}}}},
                                  {"nes", {{"iterations", 4}, {"population_n", 3}, {"checkpoint_every", 2}}},
                                  {"objective", {{"k_eot", 2}}},
                                  {"evaluation", {{"trials", 3}, {"bootstrap_resamples", 200}}}});
  return c;
}

std::size_t count(const std::string& haystack, const std::string& needle) {
  std::size_t n = 0;
  for (auto p = haystack.find(needle); p != std::string::npos; p = haystack.find(needle, p + 1)) ++n;
  return n;
}

}  // namespace

TEST_CASE("patch export and import keep pixels and physical size") {
  TempDir d("advpatch_io_patch");
  const Patch p = new_random_patch(3, 12, 8, 2.0, 1.0);
  io::export_patch(d.path / "p.png", p, {"highway", 3, 7, 0.5, "completed"});
  CHECK(fs::exists(d.path / "p.json"));
  const Patch q = io::import_patch(d.path / "p.png", 9, 9);
  CHECK(quantize_patch(q) == quantize_patch(p));
  CHECK(q.physical_width() == 2.0);
  CHECK(q.physical_height() == 1.0);
  CHECK(io::read_json(d.path / "p.json")["schema_version"] == kSchemaVersion);
}

TEST_CASE("trial records round trip and replay their flags") {
  auto sc = crosswalk_scenario();
  sc.camera.image_width = 160;
  sc.camera.image_height = 90;
  const MockOracle mock;
  const Patch red = Patch::constant(4, 4, 255, 0, 0, 1, 1);
  const auto t = run_trial(sc, &red, mock, "adversarial-000");
  const auto back = io::trial_from_json(nlohmann::json::parse(io::to_json(t).dump()));
  REQUIRE(back.frames.size() == t.frames.size());
  for (std::size_t i = 0; i < t.frames.size(); ++i) {
    const auto& f = back.frames[i];
    CHECK(f.distance == t.frames[i].distance);
    CHECK(f.response.raw_text == t.frames[i].response.raw_text);
    CHECK(f.success == (parse_action(f.response.raw_text) == sc.target_action));
    CHECK(f.critical_detected == contains_any_keyword(f.response.raw_text, sc.keywords));
  }
}

TEST_CASE("index detects missing and modified files") {
  TempDir d("advpatch_io_index");
  write_text_file(d.path / "a.txt", "alpha");
  fs::create_directories(d.path / "sub");
  write_text_file(d.path / "sub" / "b.txt", "beta");
  io::write_index(d.path);
  const auto idx = io::read_json(d.path / "index.json");
  CHECK(idx["files"].size() == 2);
  CHECK(idx["files"][1]["path"] == "sub/b.txt");
  CHECK(io::verify_index(d.path).ok);
  write_text_file(d.path / "a.txt", "alpha!");
  auto v = io::verify_index(d.path);
  CHECK_FALSE(v.ok);
  CHECK(v.problems.at(0).find("hash mismatch: a.txt") != std::string::npos);
  fs::remove(d.path / "sub" / "b.txt");
  v = io::verify_index(d.path);
  CHECK(v.problems.size() == 2);
}

TEST_CASE("SVG has one series per run with legend names") {
  io::ChartSeries a{"run_a", {{2.5, 0.1}, {7.5, 0.9}}}, b{"run<b>", {{2.5, 0.0}, {7.5, 0.5}}};
  const std::string svg = io::asr_distance_svg({a, b});
  CHECK(count(svg, "<polyline") == 2);
  CHECK(svg.find(">run_a</text>") != std::string::npos);
  CHECK(svg.find(">run&lt;b></text>") != std::string::npos);
  CHECK(svg.rfind("</svg>") != std::string::npos);
}

TEST_CASE("optimize_run writes a complete, verifiable run directory") {
  TempDir d("advpatch_io_opt");
  const RunConfig cfg = tiny_config();
  const auto b = pl::make_backends(cfg);
  const auto o = pl::optimize_run(cfg, d.path, *b.oracle, *b.embedder);
  CHECK(o.exit_code == pl::kOk);
  for (const char* f : {"config.json", "best_patch.png", "best_patch.json", "loss_history.csv", "optimize.json", "index.json",
                        "checkpoints/patch_iter_0002.png", "checkpoints/patch_iter_0004.png"})
    CHECK(fs::exists(d.path / f));
  CHECK(io::verify_index(d.path).ok);
  const auto summary = io::read_json(d.path / "optimize.json");
  CHECK(summary["candidate_evaluations"] == 4 * 2 * 3);
  CHECK(summary["oracle_queries"] == 4 * 2 * 3 * 2);
  const std::string csv = read_text_file(d.path / "loss_history.csv");
  CHECK(count(csv, "\n") == 5);
  CHECK(csv.rfind("3,", csv.size() - 1) != std::string::npos);
  const RunConfig replay = load_run_config(d.path / "config.json");
  CHECK(to_json(replay) == to_json(cfg));
}

TEST_CASE("evaluate_run: two arms, replay, dimension mismatch") {
  TempDir d("advpatch_io_eval");
  const RunConfig cfg = tiny_config();
  const auto b = pl::make_backends(cfg);
  const Patch red = Patch::constant(16, 16, 255, 0, 0, 1, 1);
  const auto o = pl::evaluate_run(cfg, red, d.path / "run1", *b.oracle, *b.embedder);
  CHECK(o.report.adversarial->asr == 1.0);
  CHECK(o.report.baseline_rate == 0.0);
  const auto m = io::read_json(d.path / "run1" / "metrics.json");
  for (const char* k : {"asr_overall", "asr_by_bin", "baseline_rate", "persistence_mean", "persistence_per_trial", "detection_rate_benign",
                        "detection_rate_adv", "detection_degradation_pp", "bleu4_by_distance", "semsim_by_distance", "p_value", "counters"})
    CHECK(m.contains(k));
  CHECK(m["schema_version"] == kSchemaVersion);
  CHECK(io::verify_index(d.path / "run1").ok);
  const std::string table = read_text_file(d.path / "run1" / "tables.csv");
  CHECK(count(table, "\n") == 3);

  pl::evaluate_run(load_run_config(d.path / "run1" / "config.json"), red, d.path / "run2", *b.oracle, *b.embedder);
  CHECK(read_text_file(d.path / "run1" / "metrics.json") == read_text_file(d.path / "run2" / "metrics.json"));

  CHECK_THROWS_AS(pl::evaluate_run(cfg, Patch::constant(8, 8, 0, 0, 0, 1, 1), d.path / "bad", *b.oracle, *b.embedder),
                  InvalidConfiguration);
}

TEST_CASE("evaluate_run: baseline-only omits adversarial fields") {
  TempDir d("advpatch_io_benign");
  const RunConfig cfg = tiny_config();
  const auto b = pl::make_backends(cfg);
  pl::evaluate_run(cfg, std::nullopt, d.path, *b.oracle, *b.embedder);
  const auto m = io::read_json(d.path / "metrics.json");
  CHECK(m.contains("baseline_rate"));
  CHECK_FALSE(m.contains("asr_overall"));
  CHECK_FALSE(m.contains("adversarial"));
  CHECK_FALSE(m.contains("p_value"));
  CHECK(count(read_text_file(d.path / "tables.csv"), "\n") == 2);
}

TEST_CASE("report_runs merges runs and rejects bad input") {
  TempDir d("advpatch_io_report");
  const RunConfig cfg = tiny_config();
  const auto b = pl::make_backends(cfg);
  const Patch red = Patch::constant(16, 16, 255, 0, 0, 1, 1);
  pl::evaluate_run(cfg, red, d.path / "alpha", *b.oracle, *b.embedder);
  pl::evaluate_run(cfg, std::nullopt, d.path / "beta", *b.oracle, *b.embedder);
  pl::report_runs({d.path / "alpha", d.path / "beta"}, d.path / "report");
  const std::string svg = read_text_file(d.path / "report" / "asr_distance.svg");
  CHECK(count(svg, "<polyline") == 2);
  CHECK(svg.find(">alpha</text>") != std::string::npos);
  CHECK(svg.find(">beta</text>") != std::string::npos);
  CHECK(count(read_text_file(d.path / "report" / "tables.csv"), "\n") == 1 + 2 + 1);

  CHECK_THROWS_AS(pl::report_runs({}, d.path / "r2"), InvalidConfiguration);
  auto m = io::read_json(d.path / "beta" / "metrics.json");
  m["schema_version"] = 7;
  io::write_json(d.path / "beta" / "metrics.json", m);
  try {
    pl::report_runs({d.path / "alpha", d.path / "beta"}, d.path / "r3");
    FAIL("expected a schema mismatch");
  } catch (const InvalidConfiguration& e) {
    const std::string what = e.what();
    CHECK(what.find("version 7") != std::string::npos);
    CHECK(what.find("version 1") != std::string::npos);
  }
}
