#pragma once

#include <cstdint>
#include <optional>
#include <set>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "lvap/core.hpp"
#include "lvap/matching.hpp"

namespace lvap {

struct PRPoint {
  double recall = 0.0;
  double precision = 0.0;

  friend bool operator==(const PRPoint&, const PRPoint&) = default;
};

// One point per ranked detection. envelope[i] is the running maximum of
// precision from the right, so it is non-increasing along the trace.
struct PRCurve {
  std::vector<PRPoint> points;
  std::vector<double> envelope;
  std::int64_t n_gt = 0;

  friend bool operator==(const PRCurve&, const PRCurve&) = default;
};

struct UndefinedCurve : std::domain_error {
  UndefinedCurve() : std::domain_error("precision-recall curve undefined: no groundtruth") {}
};

// Ignored records are skipped. Throws UndefinedCurve when n_gt == 0.
PRCurve pr_curve(std::span<const MatchRecord> records, std::int64_t n_gt);
// Same, from TP flags already in rank order.
PRCurve pr_curve_from_flags(std::span<const std::uint8_t> is_tp, std::int64_t n_gt);

double average_precision(const PRCurve& curve, const Interpolation& interpolation);

// Envelope read at n evenly spaced recall values in [0, 1].
std::vector<PRPoint> sample_envelope(const PRCurve& curve, int n_points);

struct GroupMeans {
  std::optional<double> all;
  std::optional<double> rare;
  std::optional<double> common;
  std::optional<double> frequent;

  std::optional<double> get(std::optional<FrequencyGroup> group) const;
  friend bool operator==(const GroupMeans&, const GroupMeans&) = default;
};

struct ClassResult {
  CategoryId category_id = 0;
  std::string name;
  FrequencyGroup group = FrequencyGroup::Unknown;
  std::int64_t n_gt = 0;
  std::int64_t n_dets = 0;  // surviving the ranking policy
  std::vector<std::optional<double>> ap_per_threshold;
  std::optional<double> ap;  // mean over thresholds; absent when n_gt == 0

  friend bool operator==(const ClassResult&, const ClassResult&) = default;
};

struct PooledResult {
  GroupMeans ap;  // AP^Pool and its r/c/f diagnostics
  std::vector<std::optional<double>> ap_per_threshold;

  friend bool operator==(const PooledResult&, const PooledResult&) = default;
};

struct RuntimeStats {
  double filter_ms = 0.0;
  double policy_ms = 0.0;
  double plan_ms = 0.0;
  double match_and_score_ms = 0.0;
  double total_ms = 0.0;

  friend bool operator==(const RuntimeStats&, const RuntimeStats&) = default;
};

struct EvalReport {
  std::string label;
  std::vector<double> iou_thresholds;
  RankingPolicy policy;
  Interpolation interpolation;
  FrequencyThresholds frequency_thresholds;
  std::int64_t input_detections = 0;
  std::int64_t evaluated_detections = 0;
  std::int64_t evaluated_classes = 0;
  GroupMeans ap;  // AP, AP_r, AP_c, AP_f
  std::vector<std::optional<double>> ap_per_threshold;
  std::vector<ClassResult> classes;
  std::optional<PooledResult> pooled;
  std::optional<RuntimeStats> runtime;

  bool empty() const { return evaluated_classes == 0; }
  friend bool operator==(const EvalReport&, const EvalReport&) = default;
};

// Sampled envelopes for plotting, filled on request.
struct EvalCurves {
  struct Series {
    std::optional<CategoryId> category_id;  // absent for the pooled curve
    double iou_threshold = 0.0;
    std::vector<PRPoint> points;
  };
  int n_points = 101;
  std::vector<Series> series;
};

// Federated filter, ranking policy, matching at every threshold, per-class
// AP and the macro means (plus AP^Pool when config.include_pooled).
EvalReport evaluate(const Dataset& dataset, const DetectionSet& dets, const EvalConfig& config,
                    EvalCurves* curves = nullptr);

PooledResult evaluate_pooled(const Dataset& dataset, const DetectionSet& dets,
                             const EvalConfig& config);

// Pooled AP of already-matched records: per threshold, one PR curve over all
// categories (or only those of one group), n_gt summed over the same set.
PooledResult pooled_from_matches(const MatchSet& matches, const Dataset& dataset,
                                 const FrequencyThresholds& thresholds,
                                 const Interpolation& interpolation);

struct GroupScoreStats {
  FrequencyGroup group = FrequencyGroup::Unknown;
  std::int64_t count = 0;
  std::optional<double> mean;
  std::optional<double> normalized_mean;  // mean / mean of the Frequent group
  std::vector<std::int64_t> histogram;    // equal-width bins over [0, 1]

  friend bool operator==(const GroupScoreStats&, const GroupScoreStats&) = default;
};

struct ScoreDistribution {
  int bins = 20;
  std::vector<GroupScoreStats> groups;  // Rare, Common, Frequent, Unknown
  std::vector<std::string> warnings;

  const GroupScoreStats& of(FrequencyGroup group) const;
  friend bool operator==(const ScoreDistribution&, const ScoreDistribution&) = default;
};

ScoreDistribution score_distribution(const DetectionSet& dets, const Dataset& dataset,
                                     const FrequencyThresholds& thresholds, int bins = 20);

enum class SweepAxis { DetsPerImage, DetsPerClass };

const char* axis_label(SweepAxis axis);  // "dets/im", "dets/class"

struct SweepRow {
  std::optional<std::int64_t> value;  // absent = no limit
  EvalReport report;

  friend bool operator==(const SweepRow&, const SweepRow&) = default;
};

struct SweepResult {
  SweepAxis axis = SweepAxis::DetsPerImage;
  std::vector<SweepRow> rows;

  friend bool operator==(const SweepResult&, const SweepResult&) = default;
};

// One report per value; the other limit of config.ranking_policy is held
// fixed. IoUs are computed once and every value is re-matched.
SweepResult sweep(const Dataset& dataset, const DetectionSet& dets, SweepAxis axis,
                  std::span<const std::optional<std::int64_t>> values, const EvalConfig& config);

// Removes categories outside `groups` from groundtruth and detections.
std::pair<Dataset, DetectionSet> restrict_to_groups(const Dataset& dataset,
                                                    const DetectionSet& dets,
                                                    const std::set<FrequencyGroup>& groups,
                                                    const FrequencyThresholds& thresholds);

EvalReport subset_evaluate(const Dataset& dataset, const DetectionSet& dets,
                           const std::set<FrequencyGroup>& groups, const EvalConfig& config);

}  // namespace lvap
