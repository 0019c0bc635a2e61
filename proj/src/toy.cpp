#include "lvap/toy.hpp"

#include <cmath>
#include <cstdio>

namespace lvap {

namespace {

constexpr CategoryId kClassA = 1;
constexpr CategoryId kClassB = 2;

Dataset toy_dataset() {
  std::vector<Category> categories = {{kClassA, "A", std::nullopt}, {kClassB, "B", std::nullopt}};
  std::vector<ImageRecord> images(1);
  images[0].id = 1;
  std::vector<GroundTruthInstance> instances = {
      {1, 1, kClassA, {0, 0, 10, 10}, false},
      {2, 1, kClassA, {20, 0, 10, 10}, false},
      {3, 1, kClassB, {40, 0, 10, 10}, false},
  };
  return Dataset(std::move(categories), std::move(images), std::move(instances));
}

DetectionSet toy_dets(bool b_correct) {
  DetectionSet set;
  set.detections = {
      {0, 1, kClassA, {0, 0, 10, 10}, 1.0},
      {1, 1, kClassA, {20, 0, 10, 10}, 1.0},
      // Mislocalized B1 does not overlap its instance at all.
      {2, 1, kClassB, b_correct ? BoundingBox{40, 0, 10, 10} : BoundingBox{70, 0, 10, 10}, 0.8},
  };
  return set;
}

double class_ap(const EvalReport& r, CategoryId id) {
  for (const auto& c : r.classes) {
    if (c.category_id == id && c.ap) return *c.ap;
  }
  return std::nan("");
}

}  // namespace

std::vector<ToyScenario> toy_scenarios() {
  return {{"scenario 1 (B1 correct)", 0.8, toy_dataset(), toy_dets(true)},
          {"scenario 2 (B1 mislocalized)", 0.2, toy_dataset(), toy_dets(false)}};
}

std::vector<ToyRanking> toy_rankings() {
  return {{"Ranking 1", RankingPolicy{2, std::nullopt}}, {"Ranking 2", RankingPolicy{2, 1}}};
}

EvalConfig toy_config() {
  EvalConfig config;
  config.iou_thresholds = {0.5};
  config.interpolation = Interpolation::exact();
  return config;
}

ToyResult run_toy() {
  const auto scenarios = toy_scenarios();
  const auto rankings = toy_rankings();
  ToyResult result;
  for (const auto& ranking : rankings) {
    EvalConfig config = toy_config();
    config.ranking_policy = ranking.policy;
    std::vector<EvalReport> row;
    double expectation = 0.0;
    for (const auto& s : scenarios) {
      EvalReport r = evaluate(s.dataset, s.dets, config);
      r.runtime.reset();
      r.label = ranking.name + ", " + s.name;
      expectation += s.probability * r.ap.all.value_or(std::nan(""));
      row.push_back(std::move(r));
    }
    result.reports.push_back(std::move(row));
    result.expected_map.push_back(expectation);
  }

  auto check = [&](std::string name, double expected, double actual) {
    const bool ok = std::abs(expected - actual) <= kToyTolerance;
    result.ok = result.ok && ok;
    result.checks.push_back({std::move(name), expected, actual, ok});
  };
  const auto& r = result.reports;
  check("Ranking 1 scenario 1 mAP", 0.5, r[0][0].ap.all.value_or(std::nan("")));
  check("Ranking 1 scenario 2 mAP", 0.5, r[0][1].ap.all.value_or(std::nan("")));
  check("Ranking 2 scenario 1 mAP", 0.75, r[1][0].ap.all.value_or(std::nan("")));
  check("Ranking 2 scenario 2 mAP", 0.25, r[1][1].ap.all.value_or(std::nan("")));
  check("Ranking 1 expected mAP", 0.5, result.expected_map[0]);
  check("Ranking 2 expected mAP", 0.65, result.expected_map[1]);
  check("Ranking 1 AP_A", 1.0, class_ap(r[0][0], kClassA));
  check("Ranking 2 AP_A", 0.5, class_ap(r[1][0], kClassA));
  check("Ranking 2 expected AP_B",
        0.8, scenarios[0].probability * class_ap(r[1][0], kClassB) +
                 scenarios[1].probability * class_ap(r[1][1], kClassB));
  return result;
}

std::string render_toy(const ToyResult& result) {
  const auto scenarios = toy_scenarios();
  const auto rankings = toy_rankings();
  std::string out;
  char line[160];
  for (std::size_t i = 0; i < result.reports.size(); ++i) {
    std::snprintf(line, sizeof(line), "%s (%s)\n", rankings[i].name.c_str(),
                  rankings[i].policy.describe().c_str());
    out += line;
    for (std::size_t s = 0; s < result.reports[i].size(); ++s) {
      const auto& r = result.reports[i][s];
      std::snprintf(line, sizeof(line), "  %-30s p=%.1f  AP_A=%.4f  AP_B=%.4f  mAP=%.4f\n",
                    scenarios[s].name.c_str(), scenarios[s].probability, class_ap(r, kClassA),
                    class_ap(r, kClassB), r.ap.all.value_or(std::nan("")));
      out += line;
    }
    std::snprintf(line, sizeof(line), "  expected mAP = %.4f\n", result.expected_map[i]);
    out += line;
  }
  out += "\nchecks (tolerance 1e-9)\n";
  for (const auto& c : result.checks) {
    std::snprintf(line, sizeof(line), "  [%s] %-26s expected %.6f got %.12f\n",
                  c.ok ? "ok" : "MISMATCH", c.name.c_str(), c.expected, c.actual);
    out += line;
  }
  return out;
}

}  // namespace lvap
