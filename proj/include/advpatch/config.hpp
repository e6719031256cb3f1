#pragma once

#include <json.hpp>

#include <filesystem>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "advpatch/attack.hpp"
#include "advpatch/codec.hpp"
#include "advpatch/errors.hpp"
#include "advpatch/http_oracle.hpp"
#include "advpatch/metrics.hpp"
#include "advpatch/scenario.hpp"

namespace advpatch {

inline constexpr int kSchemaVersion = 1;

enum class OracleKind { mock, http };
enum class EmbedderKind { hash, http };

struct OracleConfig {
  OracleKind kind = OracleKind::mock;
  EmbedderKind embedder = EmbedderKind::hash;
  HttpOptions http;
  MockOracle::Options mock;
};

struct EvaluationConfig {
  int trials = 10;
  std::vector<double> bin_edges_m = metrics::default_bin_edges();
  std::vector<double> key_distances_m = metrics::default_key_distances();
  int bootstrap_resamples = 2000;
  std::uint64_t bootstrap_seed = 0;
  std::string frames_manifest;  // optional external frames, relative to the config file
};

// Complete, resolved configuration of a run. Its JSON form is the run's
// config snapshot.
struct RunConfig {
  ScenarioConfig scenario = crosswalk_scenario();
  AttackConfig attack;
  OracleConfig oracle;
  EvaluationConfig evaluation;
  std::filesystem::path base_dir;  // directory of the config file; not serialised
};

namespace detail {

// Strict reader: wrong types and unknown keys are configuration errors that
// name the offending field.
class ConfigReader {
 public:
  ConfigReader(const nlohmann::json& obj, std::string path) : obj_(obj), path_(std::move(path)) {
    if (!obj_.is_object()) throw InvalidConfiguration(path_.empty() ? "<root>" : path_, "expected an object");
  }

  ~ConfigReader() noexcept(false) {
    if (std::uncaught_exceptions() > 0) return;
    for (const auto& [key, _] : obj_.items())
      if (!seen_.count(key)) throw InvalidConfiguration(field(key), "unknown field");
  }

  std::string field(const std::string& key) const { return path_.empty() ? key : path_ + "." + key; }
  bool has(const std::string& key) {
    seen_.insert(key);
    return obj_.contains(key) && !obj_[key].is_null();
  }
  const nlohmann::json& raw(const std::string& key) {
    seen_.insert(key);
    return obj_.at(key);
  }

  void number(const std::string& key, double& out) {
    if (!has(key)) return;
    if (!obj_[key].is_number()) throw InvalidConfiguration(field(key), "expected a number");
    out = obj_[key].get<double>();
  }
  void integer(const std::string& key, int& out) {
    if (!has(key)) return;
    if (!obj_[key].is_number_integer()) throw InvalidConfiguration(field(key), "expected an integer");
    out = obj_[key].get<int>();
  }
  void u64(const std::string& key, std::uint64_t& out) {
    if (!has(key)) return;
    const auto& v = obj_[key];
    if (!v.is_number_integer() || (!v.is_number_unsigned() && v.get<std::int64_t>() < 0))
      throw InvalidConfiguration(field(key), "expected a non-negative integer");
    out = v.get<std::uint64_t>();
  }
  void size(const std::string& key, std::size_t& out) {
    std::uint64_t v = out;
    u64(key, v);
    out = static_cast<std::size_t>(v);
  }
  void boolean(const std::string& key, bool& out) {
    if (!has(key)) return;
    if (!obj_[key].is_boolean()) throw InvalidConfiguration(field(key), "expected a boolean");
    out = obj_[key].get<bool>();
  }
  void string(const std::string& key, std::string& out) {
    if (!has(key)) return;
    if (!obj_[key].is_string()) throw InvalidConfiguration(field(key), "expected a string");
    out = obj_[key].get<std::string>();
  }
  void numbers(const std::string& key, std::vector<double>& out) {
    if (!has(key)) return;
    const auto& a = obj_[key];
    if (!a.is_array()) throw InvalidConfiguration(field(key), "expected an array of numbers");
    out.clear();
    for (const auto& v : a) {
      if (!v.is_number()) throw InvalidConfiguration(field(key), "expected an array of numbers");
      out.push_back(v.get<double>());
    }
  }
  void strings(const std::string& key, std::vector<std::string>& out) {
    if (!has(key)) return;
    const auto& a = obj_[key];
    if (!a.is_array()) throw InvalidConfiguration(field(key), "expected an array of strings");
    out.clear();
    for (const auto& v : a) {
      if (!v.is_string()) throw InvalidConfiguration(field(key), "expected an array of strings");
      out.push_back(v.get<std::string>());
    }
  }
  template <class T>
  void pair(const std::string& key, T& a, T& b) {
    if (!has(key)) return;
    const auto& v = obj_[key];
    if (!v.is_array() || v.size() != 2 || !v[0].is_number() || !v[1].is_number())
      throw InvalidConfiguration(field(key), "expected a two-element numeric array");
    if constexpr (std::is_integral_v<T>) {
      if (!v[0].is_number_integer() || !v[1].is_number_integer()) throw InvalidConfiguration(field(key), "expected integers");
    }
    a = v[0].get<T>();
    b = v[1].get<T>();
  }

 private:
  const nlohmann::json& obj_;
  std::string path_;
  std::set<std::string> seen_;
};

inline void read_scenario(const nlohmann::json& j, ScenarioConfig& s) {
  ConfigReader r(j, "scenario");
  if (r.has("builtin")) {
    const auto& b = r.raw("builtin");
    if (!b.is_string()) throw InvalidConfiguration("scenario.builtin", "expected a string");
    auto base = builtin_scenario(b.get<std::string>());
    if (!base) throw InvalidConfiguration("scenario.builtin", "unknown scenario '" + b.get<std::string>() + "'");
    s = *base;
  }
  r.string("name", s.name);
  if (r.has("kind")) {
    const auto& k = r.raw("kind");
    if (k == "crosswalk") s.kind = SceneKind::crosswalk;
    else if (k == "highway") s.kind = SceneKind::highway;
    else throw InvalidConfiguration("scenario.kind", "expected \"crosswalk\" or \"highway\"");
  }
  if (r.has("camera")) {
    ConfigReader c(r.raw("camera"), "scenario.camera");
    c.integer("image_width", s.camera.image_width);
    c.integer("image_height", s.camera.image_height);
    c.number("horizontal_fov_deg", s.camera.horizontal_fov_deg);
    c.number("mount_height_m", s.camera.mount_height_m);
  }
  r.number("speed_mps", s.speed_mps);
  r.number("frame_interval_s", s.frame_interval_s);
  r.number("onset_distance_m", s.onset_distance_m);
  r.number("pass_distance_m", s.pass_distance_m);
  if (r.has("patch_mount")) {
    ConfigReader m(r.raw("patch_mount"), "scenario.patch_mount");
    m.number("lateral_m", s.patch_mount.mount_center_lateral);
    m.number("height_m", s.patch_mount.mount_height);
  }
  r.pair("patch_pixels", s.patch_width_px, s.patch_height_px);
  r.pair("patch_physical_m", s.patch_width_m, s.patch_height_m);
  if (r.has("target_action")) {
    const auto& a = r.raw("target_action");
    const auto parsed = a.is_string() ? action_from_string(a.get<std::string>()) : std::nullopt;
    if (!parsed || *parsed == Action::unknown) throw InvalidConfiguration("scenario.target_action", "unknown action");
    s.target_action = *parsed;
  }
  r.string("target_response", s.target_response);
  r.string("safe_response", s.safe_response);
  r.string("critical_object", s.critical_object);
  r.number("critical_object_lateral_m", s.critical_object_lateral_m);
  r.strings("keywords", s.keywords);
  r.string("prompt", s.prompt);
  r.number("optimization_distance_m", s.optimization_distance_m);
}

inline void read_objective(const nlohmann::json& j, ObjectiveConfig& o) {
  ConfigReader r(j, "objective");
  r.string("target_response", o.target_response);
  r.number("lambda_tv", o.lambda_tv);
  r.integer("k_eot", o.k_eot);
  r.size("embed_dim", o.embed_dim);
}

inline void read_nes(const nlohmann::json& j, AttackConfig& a) {
  ConfigReader r(j, "nes");
  auto& n = a.nes;
  r.integer("population_n", n.population_n);
  r.number("sigma", n.sigma);
  r.number("alpha", n.alpha);
  r.integer("iterations", n.iterations);
  if (r.has("early_stop_loss")) {
    double v = 0;
    r.number("early_stop_loss", v);
    n.early_stop_loss = v;
  }
  if (r.has("plateau_window")) {
    int v = 0;
    r.integer("plateau_window", v);
    n.plateau_window = v;
  }
  r.u64("seed", n.seed);
  r.integer("parallelism", n.parallelism);
  r.integer("checkpoint_every", n.checkpoint_every);
  r.pair("perturbation_grid", a.grid_w, a.grid_h);
  r.numbers("scene_distances_m", a.scene_distances);
  r.u64("init_seed", a.init_seed);
}

inline void read_oracle(const nlohmann::json& j, OracleConfig& o) {
  ConfigReader r(j, "oracle");
  if (r.has("kind")) {
    const auto& k = r.raw("kind");
    if (k == "mock") o.kind = OracleKind::mock;
    else if (k == "http") o.kind = OracleKind::http;
    else throw InvalidConfiguration("oracle.kind", "expected \"mock\" or \"http\"");
  }
  if (r.has("embedder")) {
    const auto& k = r.raw("embedder");
    if (k == "hash") o.embedder = EmbedderKind::hash;
    else if (k == "http") o.embedder = EmbedderKind::http;
    else throw InvalidConfiguration("oracle.embedder", "expected \"hash\" or \"http\"");
  }
  r.string("endpoint", o.http.endpoint);
  r.number("timeout_s", o.http.timeout_s);
  r.integer("max_retries", o.http.max_retries);
  r.number("retry_backoff_s", o.http.retry_backoff_s);
  r.integer("max_in_flight", o.http.max_in_flight);
  r.number("mock_threshold", o.mock.threshold);
  r.boolean("mock_graded", o.mock.graded);
}

inline void read_evaluation(const nlohmann::json& j, EvaluationConfig& e) {
  ConfigReader r(j, "evaluation");
  r.integer("trials", e.trials);
  r.numbers("bin_edges_m", e.bin_edges_m);
  r.numbers("key_distances_m", e.key_distances_m);
  r.integer("bootstrap_resamples", e.bootstrap_resamples);
  r.u64("bootstrap_seed", e.bootstrap_seed);
  r.string("frames_manifest", e.frames_manifest);
}

}  // namespace detail

inline void validate(const RunConfig& c) {
  c.scenario.validate();
  c.attack.objective.validate();
  try {
    c.attack.nes.validate();
  } catch (const InvalidArgument& e) {
    // Messages read "nes.<field>: <reason>".
    const std::string msg = e.what();
    const auto colon = msg.find(": ");
    if (colon == std::string::npos) throw InvalidConfiguration("nes", msg);
    throw InvalidConfiguration(msg.substr(0, colon), msg.substr(colon + 2));
  }
  if (c.attack.grid_w < 0 || c.attack.grid_h < 0) throw InvalidConfiguration("nes.perturbation_grid", "must be >= 0");
  for (double d : c.attack.scene_distances)
    if (!(d > 0.0)) throw InvalidConfiguration("nes.scene_distances_m", "distances must be > 0");
  if (c.attack.objective.embed_dim < 8) throw InvalidConfiguration("objective.embed_dim", "must be >= 8");
  if (c.evaluation.trials < 1) throw InvalidConfiguration("evaluation.trials", "must be >= 1");
  if (c.evaluation.bootstrap_resamples < 1) throw InvalidConfiguration("evaluation.bootstrap_resamples", "must be >= 1");
  for (std::size_t i = 1; i < c.evaluation.bin_edges_m.size(); ++i)
    if (!(c.evaluation.bin_edges_m[i] > c.evaluation.bin_edges_m[i - 1]))
      throw InvalidConfiguration("evaluation.bin_edges_m", "must be strictly increasing");
  if (c.evaluation.bin_edges_m.size() < 2) throw InvalidConfiguration("evaluation.bin_edges_m", "need at least two edges");
  if (c.oracle.mock.threshold < 0.0) throw InvalidConfiguration("oracle.mock_threshold", "must be >= 0");
  if (c.oracle.http.max_retries < 0) throw InvalidConfiguration("oracle.max_retries", "must be >= 0");
}

inline RunConfig parse_run_config(const nlohmann::json& j) {
  RunConfig c;
  {
    detail::ConfigReader r(j, "");
    if (r.has("schema_version")) {
      const auto& v = r.raw("schema_version");
      if (!v.is_number_integer() || v.get<int>() != kSchemaVersion)
        throw InvalidConfiguration("schema_version", "expected " + std::to_string(kSchemaVersion) + ", got " + v.dump());
    }
    if (r.has("scenario")) detail::read_scenario(r.raw("scenario"), c.scenario);
    if (r.has("objective")) detail::read_objective(r.raw("objective"), c.attack.objective);
    if (r.has("nes")) detail::read_nes(r.raw("nes"), c.attack);
    if (r.has("oracle")) detail::read_oracle(r.raw("oracle"), c.oracle);
    if (r.has("evaluation")) detail::read_evaluation(r.raw("evaluation"), c.evaluation);
  }
  if (c.attack.objective.target_response.empty()) c.attack.objective.target_response = c.scenario.target_response;
  validate(c);
  return c;
}

inline RunConfig load_run_config(const std::filesystem::path& path) {
  if (!std::filesystem::exists(path)) throw InvalidConfiguration("--config", "file not found: " + path.string());
  const auto j = nlohmann::json::parse(read_text_file(path), nullptr, false);
  if (j.is_discarded()) throw InvalidConfiguration("--config", "not valid JSON: " + path.string());
  RunConfig c = parse_run_config(j);
  c.base_dir = path.parent_path();
  return c;
}

inline nlohmann::json to_json(const RunConfig& c) {
  using nlohmann::json;
  const auto& s = c.scenario;
  json scen = {
      {"name", s.name},
      {"kind", s.kind == SceneKind::crosswalk ? "crosswalk" : "highway"},
      {"camera",
       {{"image_width", s.camera.image_width},
        {"image_height", s.camera.image_height},
        {"horizontal_fov_deg", s.camera.horizontal_fov_deg},
        {"mount_height_m", s.camera.mount_height_m}}},
      {"speed_mps", s.speed_mps},
      {"frame_interval_s", s.frame_interval_s},
      {"onset_distance_m", s.onset_distance_m},
      {"pass_distance_m", s.pass_distance_m},
      {"patch_mount", {{"lateral_m", s.patch_mount.mount_center_lateral}, {"height_m", s.patch_mount.mount_height}}},
      {"patch_pixels", {s.patch_width_px, s.patch_height_px}},
      {"patch_physical_m", {s.patch_width_m, s.patch_height_m}},
      {"target_action", std::string(to_string(s.target_action))},
      {"target_response", s.target_response},
      {"safe_response", s.safe_response},
      {"critical_object", s.critical_object},
      {"critical_object_lateral_m", s.critical_object_lateral_m},
      {"keywords", s.keywords},
      {"prompt", s.prompt},
      {"optimization_distance_m", s.optimization_distance_m},
  };
  const auto& o = c.attack.objective;
  json obj = {{"target_response", o.target_response}, {"lambda_tv", o.lambda_tv}, {"k_eot", o.k_eot}, {"embed_dim", o.embed_dim}};
  const auto& n = c.attack.nes;
  json nes = {{"population_n", n.population_n},
              {"sigma", n.sigma},
              {"alpha", n.alpha},
              {"iterations", n.iterations},
              {"early_stop_loss", n.early_stop_loss ? json(*n.early_stop_loss) : json(nullptr)},
              {"plateau_window", n.plateau_window ? json(*n.plateau_window) : json(nullptr)},
              {"seed", n.seed},
              {"parallelism", n.parallelism},
              {"checkpoint_every", n.checkpoint_every},
              {"perturbation_grid", {c.attack.grid_w, c.attack.grid_h}},
              {"scene_distances_m", c.attack.scene_distances},
              {"init_seed", c.attack.init_seed}};
  json oracle = {{"kind", c.oracle.kind == OracleKind::mock ? "mock" : "http"},
                 {"embedder", c.oracle.embedder == EmbedderKind::hash ? "hash" : "http"},
                 {"endpoint", c.oracle.http.endpoint},
                 {"timeout_s", c.oracle.http.timeout_s},
                 {"max_retries", c.oracle.http.max_retries},
                 {"retry_backoff_s", c.oracle.http.retry_backoff_s},
                 {"max_in_flight", c.oracle.http.max_in_flight},
                 {"mock_threshold", c.oracle.mock.threshold},
                 {"mock_graded", c.oracle.mock.graded}};
  const auto& e = c.evaluation;
  json eval = {{"trials", e.trials},
               {"bin_edges_m", e.bin_edges_m},
               {"key_distances_m", e.key_distances_m},
               {"bootstrap_resamples", e.bootstrap_resamples},
               {"bootstrap_seed", e.bootstrap_seed}};
  if (!e.frames_manifest.empty()) eval["frames_manifest"] = (c.base_dir / e.frames_manifest).lexically_normal().string();
  return json{{"schema_version", kSchemaVersion}, {"scenario", scen}, {"objective", obj}, {"nes", nes}, {"oracle", oracle}, {"evaluation", eval}};
}

}  // namespace advpatch
