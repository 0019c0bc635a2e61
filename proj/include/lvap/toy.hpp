#pragma once

#include <string>
#include <vector>

#include "lvap/core.hpp"
#include "lvap/metrics.hpp"

namespace lvap {

// The two-class toy: one image, class A with two instances, class B with one.
// Predictions A1 and A2 (score 1.0) are correct; B1 (score 0.8) is correct
// with probability 0.8 and mislocalized otherwise.
struct ToyScenario {
  std::string name;
  double probability = 0.0;
  Dataset dataset;
  DetectionSet dets;
};

struct ToyRanking {
  std::string name;
  RankingPolicy policy;
};

std::vector<ToyScenario> toy_scenarios();
// Ranking 1 keeps the top 2 per image; Ranking 2 first keeps 1 per class.
std::vector<ToyRanking> toy_rankings();
// Exact interpolation at the single IoU threshold 0.5.
EvalConfig toy_config();

struct ToyCheck {
  std::string name;
  double expected = 0.0;
  double actual = 0.0;
  bool ok = false;
};

struct ToyResult {
  // reports[r][s]: ranking r under scenario s.
  std::vector<std::vector<EvalReport>> reports;
  std::vector<double> expected_map;  // per ranking, scenario-weighted
  std::vector<ToyCheck> checks;
  bool ok = true;
};

inline constexpr double kToyTolerance = 1e-9;

ToyResult run_toy();
std::string render_toy(const ToyResult& result);

}  // namespace lvap
