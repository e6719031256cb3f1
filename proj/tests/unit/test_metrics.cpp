#include <catch_amalgamated.hpp>

#include "advpatch/keywords.hpp"
#include "advpatch/metrics.hpp"

using namespace advpatch;
using namespace advpatch::metrics;
using Catch::Matchers::WithinAbs;

namespace {

TrialRecord trial(const std::vector<int>& flags, const std::vector<double>& distances = {}, Condition c = Condition::adversarial) {
  TrialRecord t;
  t.condition = c;
  for (std::size_t i = 0; i < flags.size(); ++i) {
    FrameRecord f;
    f.index = static_cast<int>(i);
    f.distance = distances.empty() ? 30.0 - static_cast<double>(i) : distances[i];
    f.condition = c;
    f.success = flags[i] == 1;
    f.query_failed = flags[i] < 0;
    t.frames.push_back(f);
  }
  return t;
}

}  // namespace

TEST_CASE("asr examples") {
  CHECK(asr({trial({1, 1, 0, 1}), trial({0, 0, 1, 1})}) == 0.625);
  CHECK(asr({trial({1, 1}), trial({1})}) == 1.0);
  CHECK(asr({trial({0, 0}), trial({0})}) == 0.0);
  CHECK_THROWS_AS(asr({}), InvalidArgument);
}

TEST_CASE("failed queries leave the denominator") {
  CHECK(asr({trial({1, -1, 0, -1})}) == 0.5);
  const auto r = success_count({trial({1, -1, 0, -1})});
  CHECK(r.frames == 2);
  CHECK(r.hits == 1);
}

TEST_CASE("asr_by_distance uses half-open bins") {
  const auto t = trial({1, 0, 1}, {10.0, 19.999, 20.0});
  const auto bins = asr_by_distance({t}, {0, 10, 20, 30});
  const DistanceBin b1{10, 20}, b2{20, 30};
  REQUIRE(bins.count(b1));
  CHECK(bins.at(b1).frames == 2);
  CHECK(bins.at(b1).value() == 0.5);
  CHECK(bins.at(b2).value() == 1.0);
  CHECK(b1.label() == "[10,20)");

  const auto all = trial({1, 0, 1, 1}, {12, 13, 14, 15});
  const auto one = asr_by_distance({all}, {10, 20});
  CHECK(one.at(DistanceBin{10, 20}).value() == asr({all}));
}

TEST_CASE("persistence examples") {
  CHECK(longest_success_run(trial({1, 0, 1, 1, 1, 0, 1, 1, 1, 1})) == 4);
  CHECK(longest_success_run(trial({1, 1, 1, 1, 1})) == 5);
  CHECK(longest_success_run(trial({0, 0})) == 0);
  CHECK(longest_success_run(trial({1, 1, -1, 1})) == 2);
  const auto p = persistence({trial({1, 1, 0}), trial({0, 1, 1})});
  CHECK(p.mean == 2.0);
  CHECK(p.per_trial == std::vector<int>{2, 2});
}

TEST_CASE("asr and persistence match brute-force enumeration") {
  RngStream rng(2024, 1);
  for (int c = 0; c < 1000; ++c) {
    const int n_trials = static_cast<int>(rng.uniform_int(1, 6));
    std::vector<TrialRecord> trials;
    long hits = 0, frames = 0;
    double run_sum = 0;
    for (int t = 0; t < n_trials; ++t) {
      std::vector<int> flags(static_cast<std::size_t>(rng.uniform_int(1, 12)));
      for (int& f : flags) f = static_cast<int>(rng.uniform_int(0, 1));
      flags[0] = flags[0] | (t == 0);  // at least one valid frame overall
      int best = 0;
      for (std::size_t i = 0; i < flags.size(); ++i)
        for (std::size_t j = i; j < flags.size(); ++j) {
          bool all = true;
          for (std::size_t k = i; k <= j; ++k) all = all && flags[k] == 1;
          if (all) best = std::max(best, static_cast<int>(j - i + 1));
        }
      for (int f : flags) {
        hits += f;
        ++frames;
      }
      run_sum += best;
      trials.push_back(trial(flags));
    }
    REQUIRE(asr(trials) == static_cast<double>(hits) / static_cast<double>(frames));
    REQUIRE(persistence(trials).mean == run_sum / n_trials);
  }
}

TEST_CASE("keyword detection") {
  const std::vector<std::string> kw = {"pedestrian", "person", "walker", "crossing"};
  CHECK(contains_any_keyword("A pedestrian is crossing", kw));
  CHECK(contains_any_keyword("the pedestrians gather", kw));
  CHECK_FALSE(contains_any_keyword("The road is clear", kw));
  CHECK_FALSE(contains_any_keyword("impersonation", {"person"}));
  CHECK(contains_any_keyword("a metal guard rail", {"guard rail"}));
  CHECK(contains_any_keyword("two guard rails", {"guard rail"}));
  CHECK_FALSE(contains_any_keyword("guard the rail", {"guard rail"}));
}

TEST_CASE("detection degradation") {
  auto text_trial = [](const std::vector<std::string>& texts) {
    TrialRecord t;
    for (const auto& s : texts) {
      FrameRecord f;
      f.response.raw_text = s;
      t.frames.push_back(f);
    }
    return t;
  };
  const std::vector<std::string> kw = {"pedestrian"};
  const auto ben = text_trial({"a pedestrian", "pedestrian again"});
  const auto adv = text_trial({"clear road", "all clear"});
  CHECK(detection_degradation({ben}, {ben}, kw) == 0.0);
  CHECK(detection_degradation({ben}, {adv}, kw) == 100.0);
  CHECK(detection_rate({ben}, kw) == 1.0);
  CHECK_THAT(100.0 * (0.923 - 0.212), WithinAbs(71.1, 1e-9));
}

TEST_CASE("bleu4 conventions and reference value") {
  CHECK(bleu4("the cat sat on the mat", "the cat sat on the mat") == 1.0);
  CHECK(bleu4("alpha beta gamma delta", "one two three four") <= 1e-6);
  CHECK(bleu4("", "x") == 0.0);
  CHECK(bleu4("x", "") == 0.0);
  // Reference values from a separate Python implementation of the recipe.
  CHECK_THAT(bleu4("the cat sat on the mat", "the cat is on the mat"), WithinAbs(0.003343701524882112, 1e-15));
  CHECK_THAT(bleu4("a pedestrian is crossing the road", "the pedestrian crossing road ahead is busy"),
             WithinAbs(1.4382099030436648e-07, 1e-19));
}

TEST_CASE("bleu4 of a string with itself is 1") {
  RngStream rng(77, 3);
  const std::vector<std::string> vocab = {"the", "car", "road", "stop", "left", "a", "pedestrian", "is", "clear", "go"};
  for (int i = 0; i < 100; ++i) {
    std::string s;
    const auto n = rng.uniform_int(1, 15);
    for (int k = 0; k < n; ++k) s += vocab[static_cast<std::size_t>(rng.uniform_int(0, 9))] + " ";
    CHECK(bleu4(s, s) == 1.0);
  }
}

TEST_CASE("semantic similarity conventions") {
  const HashEmbedder emb;
  CHECK(semantic_similarity("same words here", "same words here", emb) == Catch::Approx(1.0).epsilon(1e-12));
  CHECK(semantic_similarity("", "something", emb) == 0.0);
  CHECK_THAT(semantic_similarity("the cat sat on the mat", "the cat is on the mat", emb), WithinAbs(0.875, 1e-12));
}

TEST_CASE("cluster bootstrap") {
  std::vector<TrialRecord> a, b, ones, zeros;
  for (int i = 0; i < 10; ++i) {
    a.push_back(trial({1, 0, 1, 0, 1, 1, 0, 0}));
    b.push_back(trial({1, 0, 1, 0, 1, 1, 0, 0}));
    ones.push_back(trial({1, 1, 1, 1, 1, 1, 1, 1}));
    zeros.push_back(trial({0, 0, 0, 0, 0, 0, 0, 0}));
  }
  CHECK(cluster_bootstrap_p(a, b, 2000, 1).p_value >= 0.8);
  const auto sep = cluster_bootstrap_p(ones, zeros, 2000, 1);
  CHECK(sep.p_value <= 0.001);
  CHECK(sep.observed_diff == 1.0);
  CHECK(sep.ci_low == 1.0);
  CHECK(cluster_bootstrap_p(ones, zeros, 2000, 1).p_value == sep.p_value);
  CHECK_THROWS_AS(cluster_bootstrap_p({ones[0]}, zeros, 2000, 1), InsufficientData);
}

TEST_CASE("bootstrap on noisy arms is seed-deterministic and brackets the observed difference") {
  RngStream rng(5, 5);
  std::vector<TrialRecord> a, b;
  for (int i = 0; i < 10; ++i) {
    std::vector<int> fa(8), fb(8);
    for (int& f : fa) f = rng.uniform01() < 0.7 ? 1 : 0;
    for (int& f : fb) f = rng.uniform01() < 0.2 ? 1 : 0;
    a.push_back(trial(fa));
    b.push_back(trial(fb));
  }
  const auto r1 = cluster_bootstrap_p(a, b, 2000, 9);
  const auto r2 = cluster_bootstrap_p(a, b, 2000, 9);
  CHECK(r1.p_value == r2.p_value);
  CHECK(r1.ci_low == r2.ci_low);
  CHECK(r1.ci_low <= r1.observed_diff);
  CHECK(r1.observed_diff <= r1.ci_high);
  CHECK(r1.p_value < 0.05);
}

TEST_CASE("report: baseline-only and two-arm") {
  auto sc = crosswalk_scenario();
  std::vector<TrialRecord> ben, adv;
  for (int i = 0; i < 3; ++i) {
    ben.push_back(trial({0, 0, 0, 0}, {32, 21, 11, 3}, Condition::benign));
    adv.push_back(trial({1, 1, 0, 1}, {32, 21, 11, 3}));
  }
  const HashEmbedder emb;
  const auto base = build_report(sc, ben, {}, emb);
  CHECK_FALSE(base.adversarial.has_value());
  CHECK(base.baseline_rate == 0.0);
  const auto full = build_report(sc, ben, adv, emb);
  REQUIRE(full.adversarial.has_value());
  CHECK(full.adversarial->asr == 0.75);
  CHECK(full.significance.has_value());
  CHECK(full.quality_by_distance.size() == 3);
  CHECK(full.oracle_queries == 24);
}
