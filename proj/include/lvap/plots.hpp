#pragma once

#include <string>

#include "lvap/metrics.hpp"

namespace lvap {

// Point series: one row per sampled point, pooled curve first.
std::string pr_curves_csv(const EvalCurves& curves);
// Static SVG: per-class curves at the first threshold in grey, pooled curves in blue.
std::string pr_curves_svg(const EvalCurves& curves, const std::string& title);

// Histogram of each frequency group, normalized to the group's count.
std::string score_histogram_svg(const ScoreDistribution& dist, const std::string& title);

}  // namespace lvap
