#include <catch_amalgamated.hpp>

#include "advpatch/config.hpp"

using namespace advpatch;
using nlohmann::json;

namespace {

std::string field_of(const json& j) {
  try {
    parse_run_config(j);
  } catch (const InvalidConfiguration& e) {
    return e.field();
  }
  return "";
}

}  // namespace

TEST_CASE("defaults match the reference hyperparameters") {
  const RunConfig c = parse_run_config(json::object());
  CHECK(c.scenario.name == "crosswalk");
  CHECK(c.attack.nes.population_n == 20);
  CHECK(c.attack.nes.sigma == 0.1);
  CHECK(c.attack.nes.alpha == 0.02);
  CHECK(c.attack.nes.iterations == 150);
  CHECK(c.attack.objective.k_eot == 5);
  CHECK(c.attack.objective.lambda_tv == 0.001);
  CHECK(c.attack.objective.target_response == c.scenario.target_response);
  CHECK(c.evaluation.trials == 10);
  CHECK(c.evaluation.bootstrap_resamples == 2000);
}

TEST_CASE("builtin scenario with overrides") {
  const json j = {{"scenario", {{"builtin", "highway"}, {"camera", {{"image_width", 480}, {"image_height", 270}}}}},
                  {"nes", {{"iterations", 3}, {"perturbation_grid", {4, 2}}}}};
  const RunConfig c = parse_run_config(j);
  CHECK(c.scenario.name == "highway");
  CHECK(c.scenario.camera.image_width == 480);
  CHECK(c.scenario.patch_width_px == 1024);
  CHECK(c.attack.nes.iterations == 3);
  CHECK(c.attack.grid_w == 4);
  CHECK(c.attack.grid_h == 2);
  CHECK(c.attack.objective.target_response == "The driver should turn right to exit the highway");
}

TEST_CASE("errors name the offending field") {
  CHECK(field_of({{"nes", {{"iterations", "many"}}}}) == "nes.iterations");
  CHECK(field_of({{"nes", {{"itterations", 5}}}}) == "nes.itterations");
  CHECK(field_of({{"bogus", 1}}) == "bogus");
  CHECK(field_of({{"scenario", {{"camera", {{"image_width", -5}}}}}}) == "scenario.camera.image_width");
  CHECK(field_of({{"scenario", {{"speed_mps", 0}}}}) == "scenario.speed_mps");
  CHECK(field_of({{"scenario", {{"builtin", "mars"}}}}) == "scenario.builtin");
  CHECK(field_of({{"oracle", {{"kind", "carrier-pigeon"}}}}) == "oracle.kind");
  CHECK(field_of({{"evaluation", {{"bin_edges_m", {0, 10, 5}}}}}) == "evaluation.bin_edges_m");
  CHECK(field_of({{"schema_version", 99}}) == "schema_version");
  CHECK(field_of({{"objective", {{"k_eot", 0}}}}) == "objective.k_eot");
  CHECK(field_of({{"nes", {{"iterations", 0}}}}) == "nes.iterations");
}

TEST_CASE("snapshot round trip is a fixed point") {
  const json j = {{"scenario", {{"builtin", "crosswalk"}, {"camera", {{"image_width", 480}, {"image_height", 270}}}}},
                  {"nes", {{"seed", 17}, {"plateau_window", 10}, {"scene_distances_m", {10.0, 15.0}}}},
                  {"oracle", {{"mock_graded", false}}},
                  {"evaluation", {{"trials", 4}}}};
  const RunConfig c = parse_run_config(j);
  const json snap = to_json(c);
  CHECK(to_json(parse_run_config(snap)) == snap);
  CHECK(snap["schema_version"] == kSchemaVersion);
  CHECK(snap["nes"]["plateau_window"] == 10);
  CHECK(snap["oracle"]["mock_graded"] == false);
}

TEST_CASE("load_run_config reports missing and malformed files") {
  CHECK_THROWS_AS(load_run_config("/nonexistent/config.json"), InvalidConfiguration);
  const auto p = std::filesystem::temp_directory_path() / "advpatch_bad_config.json";
  write_text_file(p, "{ not json");
  CHECK_THROWS_AS(load_run_config(p), InvalidConfiguration);
  std::filesystem::remove(p);
}

TEST_CASE("shipped example configs load") {
  const std::filesystem::path dir = std::filesystem::path(ADVPATCH_FIXTURES) / ".." / ".." / "configs";
  CHECK(load_run_config(dir / "crosswalk_desk.json").scenario.name == "crosswalk");
  CHECK(load_run_config(dir / "highway_desk.json").scenario.name == "highway");
}
