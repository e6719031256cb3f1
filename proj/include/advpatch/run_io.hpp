#pragma once

#include <json.hpp>

#include <algorithm>
#include <cstdio>
#include <filesystem>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include "advpatch/codec.hpp"
#include "advpatch/config.hpp"
#include "advpatch/metrics.hpp"
#include "advpatch/nes.hpp"
#include "advpatch/scenario.hpp"

namespace advpatch::io {

namespace fs = std::filesystem;
using nlohmann::json;

inline constexpr const char* kIndexFile = "index.json";

inline void write_json(const fs::path& path, const json& j) { write_text_file(path, j.dump(2) + "\n"); }

inline json read_json(const fs::path& path) {
  const auto j = json::parse(read_text_file(path), nullptr, false);
  if (j.is_discarded()) throw ValidationError("not valid JSON: " + path.string());
  return j;
}

// ---- patches ---------------------------------------------------------------

struct PatchMetadata {
  std::string scenario;
  std::uint64_t seed = 0;
  std::uint64_t iteration = 0;
  double best_loss = 0.0;
  std::string status;
};

// PNG (8-bit RGB) plus a JSON sidecar with the physical size.
inline void export_patch(const fs::path& png_path, const Patch& patch, const PatchMetadata& meta) {
  write_png_file(png_path, quantize_patch(clip_patch(patch)));
  json side = {{"schema_version", kSchemaVersion},
               {"width", patch.width()},
               {"height", patch.height()},
               {"physical_width_m", patch.physical_width()},
               {"physical_height_m", patch.physical_height()},
               {"scenario", meta.scenario},
               {"seed", meta.seed},
               {"iteration", meta.iteration},
               {"best_loss", meta.best_loss},
               {"status", meta.status}};
  fs::path sidecar = png_path;
  sidecar.replace_extension(".json");
  write_json(sidecar, side);
}

// Loads a patch PNG; physical size comes from the sidecar when present,
// otherwise from the given defaults.
inline Patch import_patch(const fs::path& png_path, double default_w_m, double default_h_m) {
  const ImageBuffer img = read_png_file(png_path);
  double w = default_w_m, h = default_h_m;
  fs::path sidecar = png_path;
  sidecar.replace_extension(".json");
  if (fs::exists(sidecar)) {
    const json j = read_json(sidecar);
    w = j.value("physical_width_m", w);
    h = j.value("physical_height_m", h);
  }
  return patch_from_image(img, w, h);
}

inline std::string loss_history_csv(const nes::OptState& s, std::uint64_t queries_per_eval, std::uint64_t evals_per_iteration) {
  std::ostringstream os;
  os.precision(17);
  os << "iteration,mean_loss,best_loss,candidate_evals,oracle_queries\n";
  for (std::size_t i = 0; i < s.loss_history.size(); ++i) {
    const std::uint64_t evals = evals_per_iteration * (i + 1);
    os << i << ',' << s.loss_history[i] << ',' << s.best_history[i] << ',' << evals << ',' << evals * queries_per_eval << '\n';
  }
  return os.str();
}

// ---- trials and metrics ----------------------------------------------------

inline json to_json(const FrameRecord& f) {
  return json{{"index", f.index},
              {"distance_m", f.distance},
              {"condition", std::string(to_string(f.condition))},
              {"raw_text", f.response.raw_text},
              {"parsed_action", std::string(to_string(f.response.parsed_action))},
              {"success", f.success},
              {"critical_detected", f.critical_detected},
              {"query_failed", f.query_failed},
              {"error", f.error},
              {"latency_s", f.response.query_latency}};
}

inline json to_json(const TrialRecord& t) {
  json frames = json::array();
  for (const auto& f : t.frames) frames.push_back(to_json(f));
  return json{{"trial_id", t.trial_id},
              {"scenario", t.scenario_name},
              {"condition", std::string(to_string(t.condition))},
              {"frames", frames}};
}

inline TrialRecord trial_from_json(const json& j) {
  TrialRecord t;
  t.trial_id = j.at("trial_id").get<std::string>();
  t.scenario_name = j.at("scenario").get<std::string>();
  t.condition = j.at("condition") == "benign" ? Condition::benign : Condition::adversarial;
  for (const auto& fj : j.at("frames")) {
    FrameRecord f;
    f.index = fj.at("index").get<int>();
    f.distance = fj.at("distance_m").get<double>();
    f.condition = t.condition;
    f.response.raw_text = fj.at("raw_text").get<std::string>();
    f.response.parsed_action = action_from_string(fj.at("parsed_action").get<std::string>()).value_or(Action::unknown);
    f.response.query_latency = fj.value("latency_s", 0.0);
    f.success = fj.at("success").get<bool>();
    f.critical_detected = fj.at("critical_detected").get<bool>();
    f.query_failed = fj.at("query_failed").get<bool>();
    f.error = fj.value("error", "");
    t.frames.push_back(std::move(f));
  }
  return t;
}

inline json trials_json(const std::vector<TrialRecord>& benign, const std::vector<TrialRecord>& adversarial) {
  json arr = json::array();
  for (const auto& t : benign) arr.push_back(to_json(t));
  for (const auto& t : adversarial) arr.push_back(to_json(t));
  return json{{"schema_version", kSchemaVersion}, {"trials", arr}};
}

inline std::string distance_key(double d) { return metrics::format_number(d); }

inline json to_json(const metrics::ArmSummary& a) {
  json bins = json::object();
  for (const auto& [bin, rate] : a.asr_by_bin)
    bins[bin.label()] = {{"lo_m", bin.lo}, {"hi_m", bin.hi}, {"rate", rate.value()}, {"successes", rate.hits}, {"frames", rate.frames}};
  return json{{"trials", a.trials},
              {"asr", a.asr},
              {"asr_trial_stddev", a.asr_trial_stddev},
              {"asr_by_bin", bins},
              {"persistence_mean", a.persistence.mean},
              {"persistence_per_trial", a.persistence.per_trial},
              {"detection_rate", a.detection_rate},
              {"valid_frames", a.valid_frames},
              {"failed_queries", a.failed_queries}};
}

// metrics.json: flat headline fields plus per-arm detail. Adversarial-only
// fields are omitted for baseline-only runs.
// Nothing here depends on the output location, so replaying an evaluation
// reproduces the file byte for byte.
inline json to_json(const metrics::MetricsReport& r) {
  json j = {{"schema_version", kSchemaVersion},
            {"scenario", r.scenario},
            {"bin_edges_m", r.bin_edges},
            {"baseline_rate", r.baseline_rate},
            {"detection_rate_benign", r.benign.detection_rate},
            {"benign", to_json(r.benign)},
            {"counters",
             {{"oracle_queries", r.oracle_queries},
              {"failed_queries", r.benign.failed_queries + (r.adversarial ? r.adversarial->failed_queries : 0)}}}};
  if (r.adversarial) {
    const auto& a = *r.adversarial;
    j["adversarial"] = to_json(a);
    j["asr_overall"] = a.asr;
    j["asr_by_bin"] = j["adversarial"]["asr_by_bin"];
    j["asr_trial_stddev"] = a.asr_trial_stddev;
    j["persistence_mean"] = a.persistence.mean;
    j["persistence_per_trial"] = a.persistence.per_trial;
    j["detection_rate_adv"] = a.detection_rate;
    j["detection_degradation_pp"] = r.detection_degradation_pp.value_or(0.0);
    json bleu = json::object(), sem = json::object();
    for (const auto& [d, q] : r.quality_by_distance) {
      bleu[distance_key(d)] = q.bleu4;
      sem[distance_key(d)] = q.semantic_similarity;
    }
    j["bleu4_by_distance"] = bleu;
    j["semsim_by_distance"] = sem;
    if (r.significance) {
      const auto& s = *r.significance;
      j["p_value"] = s.p_value;
      j["significance"] = {{"method", "trial-level cluster bootstrap (substitute for GEE)"},
                           {"resamples", s.resamples},
                           {"observed_asr_difference", s.observed_diff},
                           {"ci95_low", s.ci_low},
                           {"ci95_high", s.ci_high}};
    }
  }
  return j;
}

// ---- tables and chart --------------------------------------------------------

inline std::string csv_escape(const std::string& s) {
  if (s.find_first_of(",\"\n") == std::string::npos) return s;
  std::string out = "\"";
  for (char c : s) {
    if (c == '"') out += '"';
    out += c;
  }
  return out + "\"";
}

inline constexpr const char* kTablesHeader =
    "run,scenario,condition,trials,valid_frames,asr,asr_trial_stddev,persistence_mean,detection_rate,failed_queries,p_value\n";

// One row per condition present in a metrics.json document.
inline std::string table_rows(const json& m, const std::string& run_name) {
  std::ostringstream os;
  os.precision(6);
  const auto row = [&](const char* cond, const json& arm) {
    os << csv_escape(run_name) << ',' << csv_escape(m.value("scenario", "")) << ',' << cond << ',' << arm.at("trials") << ','
       << arm.at("valid_frames") << ',' << arm.at("asr").get<double>() << ',' << arm.at("asr_trial_stddev").get<double>() << ','
       << arm.at("persistence_mean").get<double>() << ',' << arm.at("detection_rate").get<double>() << ',' << arm.at("failed_queries")
       << ',';
    if (std::string(cond) == "adversarial" && m.contains("p_value")) os << m.at("p_value").get<double>();
    os << '\n';
  };
  row("benign", m.at("benign"));
  if (m.contains("adversarial")) row("adversarial", m.at("adversarial"));
  return os.str();
}

struct ChartSeries {
  std::string name;
  std::vector<std::pair<double, double>> points;  // (distance m, ASR fraction)
};

// ASR-vs-distance points from a metrics.json (adversarial arm if present).
inline ChartSeries series_from_metrics(const json& m, std::string name) {
  ChartSeries s;
  s.name = std::move(name);
  const json& arm = m.contains("adversarial") ? m.at("adversarial") : m.at("benign");
  for (const auto& [label, b] : arm.at("asr_by_bin").items())
    s.points.emplace_back(0.5 * (b.at("lo_m").get<double>() + b.at("hi_m").get<double>()), b.at("rate").get<double>());
  std::sort(s.points.begin(), s.points.end());
  return s;
}

// Static line chart: ASR (%) against distance with the 10-25 m decision
// range shaded, one series per run.
inline std::string asr_distance_svg(const std::vector<ChartSeries>& series) {
  constexpr double W = 640, H = 400, L = 60, R = 160, T = 30, B = 50;
  double max_d = 40.0;
  for (const auto& s : series)
    for (const auto& p : s.points) max_d = std::max(max_d, p.first);
  const auto sx = [&](double d) { return L + d / max_d * (W - L - R); };
  const auto sy = [&](double a) { return H - B - a * (H - T - B); };
  static constexpr const char* palette[] = {"#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd", "#8c564b"};
  char buf[256];
  std::ostringstream os;
  os << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << W << "\" height=\"" << H << "\" font-family=\"sans-serif\" font-size=\"12\">\n";
  std::snprintf(buf, sizeof buf, "<rect x=\"%.1f\" y=\"%.1f\" width=\"%.1f\" height=\"%.1f\" fill=\"#eeeeee\"/>\n", sx(10), sy(1.0),
                sx(25) - sx(10), sy(0.0) - sy(1.0));
  os << buf;
  std::snprintf(buf, sizeof buf, "<line x1=\"%.1f\" y1=\"%.1f\" x2=\"%.1f\" y2=\"%.1f\" stroke=\"black\"/>\n", L, sy(0), W - R, sy(0));
  os << buf;
  std::snprintf(buf, sizeof buf, "<line x1=\"%.1f\" y1=\"%.1f\" x2=\"%.1f\" y2=\"%.1f\" stroke=\"black\"/>\n", L, sy(0), L, sy(1));
  os << buf;
  for (int pct = 0; pct <= 100; pct += 25) {
    std::snprintf(buf, sizeof buf, "<text x=\"%.1f\" y=\"%.1f\" text-anchor=\"end\">%d%%</text>\n", L - 6, sy(pct / 100.0) + 4, pct);
    os << buf;
  }
  for (double d = 0; d <= max_d + 1e-9; d += 10) {
    std::snprintf(buf, sizeof buf, "<text x=\"%.1f\" y=\"%.1f\" text-anchor=\"middle\">%g</text>\n", sx(d), sy(0) + 18, d);
    os << buf;
  }
  std::snprintf(buf, sizeof buf, "<text x=\"%.1f\" y=\"%.1f\" text-anchor=\"middle\">Distance (m)</text>\n", (L + W - R) / 2, H - 10);
  os << buf;
  std::snprintf(buf, sizeof buf, "<text x=\"15\" y=\"%.1f\" transform=\"rotate(-90 15 %.1f)\" text-anchor=\"middle\">ASR</text>\n",
                (T + H - B) / 2, (T + H - B) / 2);
  os << buf;
  for (std::size_t i = 0; i < series.size(); ++i) {
    const auto& s = series[i];
    const char* color = palette[i % std::size(palette)];
    os << "<polyline fill=\"none\" stroke=\"" << color << "\" stroke-width=\"2\" points=\"";
    for (const auto& [d, a] : s.points) {
      std::snprintf(buf, sizeof buf, "%.1f,%.1f ", sx(d), sy(a));
      os << buf;
    }
    os << "\"/>\n";
    for (const auto& [d, a] : s.points) {
      std::snprintf(buf, sizeof buf, "<circle cx=\"%.1f\" cy=\"%.1f\" r=\"3\" fill=\"%s\"/>\n", sx(d), sy(a), color);
      os << buf;
    }
    const double ly = T + 20.0 * static_cast<double>(i);
    std::snprintf(buf, sizeof buf, "<rect x=\"%.1f\" y=\"%.1f\" width=\"12\" height=\"12\" fill=\"%s\"/>\n", W - R + 15, ly, color);
    os << buf;
    std::string name;
    for (char c : s.name) {
      if (c == '<') name += "&lt;";
      else if (c == '&') name += "&amp;";
      else name += c;
    }
    std::snprintf(buf, sizeof buf, "<text x=\"%.1f\" y=\"%.1f\">", W - R + 32, ly + 10);
    os << buf << name << "</text>\n";
  }
  os << "</svg>\n";
  return os.str();
}

// ---- run index -----------------------------------------------------------

// Lists every regular file under `dir` (except the index itself) with its
// SHA-256, sorted by relative path.
inline json build_index(const fs::path& dir) {
  std::vector<std::string> rel;
  for (const auto& e : fs::recursive_directory_iterator(dir)) {
    if (!e.is_regular_file()) continue;
    const std::string r = fs::relative(e.path(), dir).generic_string();
    if (r != kIndexFile) rel.push_back(r);
  }
  std::sort(rel.begin(), rel.end());
  json files = json::array();
  for (const auto& r : rel) files.push_back({{"path", r}, {"sha256", sha256_file(dir / r)}});
  return json{{"schema_version", kSchemaVersion}, {"files", files}};
}

inline void write_index(const fs::path& dir) { write_json(dir / kIndexFile, build_index(dir)); }

struct VerifyResult {
  bool ok = true;
  std::vector<std::string> problems;
};

inline VerifyResult verify_index(const fs::path& dir) {
  VerifyResult v;
  const fs::path idx = dir / kIndexFile;
  if (!fs::exists(idx)) {
    v.ok = false;
    v.problems.push_back("missing " + idx.string());
    return v;
  }
  const json j = read_json(idx);
  for (const auto& f : j.at("files")) {
    const fs::path p = dir / f.at("path").get<std::string>();
    if (!fs::exists(p)) {
      v.ok = false;
      v.problems.push_back("missing file: " + f.at("path").get<std::string>());
    } else if (sha256_file(p) != f.at("sha256").get<std::string>()) {
      v.ok = false;
      v.problems.push_back("hash mismatch: " + f.at("path").get<std::string>());
    }
  }
  return v;
}

}  // namespace advpatch::io
