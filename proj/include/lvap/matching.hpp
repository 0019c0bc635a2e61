#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "lvap/core.hpp"
#include "lvap/ranking.hpp"

namespace lvap {

enum class Outcome : std::uint8_t { TruePositive, FalsePositive, Ignored };

const char* outcome_name(Outcome outcome);

struct MatchRecord {
  DetectionId detection_id = 0;
  CategoryId category_id = 0;
  ImageId image_id = 0;
  double score = 0.0;
  double iou_threshold = 0.0;
  Outcome outcome = Outcome::FalsePositive;
  InstanceId gt_id = -1;  // set for TruePositive and ignore-region matches

  friend bool operator==(const MatchRecord&, const MatchRecord&) = default;
};

// All records of one (category, IoU threshold) pair, sorted by
// (score desc, detection_id asc).
struct MatchGroup {
  CategoryId category_id = 0;
  double iou_threshold = 0.0;
  std::int64_t n_gt = 0;  // non-ignore instances over evaluated images
  std::vector<MatchRecord> records;

  std::int64_t count(Outcome outcome) const;
  friend bool operator==(const MatchGroup&, const MatchGroup&) = default;
};

class MatchSet {
 public:
  MatchSet() = default;
  MatchSet(std::vector<CategoryId> categories, std::vector<double> thresholds,
           std::vector<MatchGroup> groups);

  const std::vector<CategoryId>& categories() const { return categories_; }
  const std::vector<double>& thresholds() const { return thresholds_; }
  const std::vector<MatchGroup>& groups() const { return groups_; }

  // Category-major layout: group(c, t) = groups()[c * thresholds().size() + t].
  const MatchGroup& group(std::size_t category_index, std::size_t threshold_index) const;
  const MatchGroup* find(CategoryId category, std::size_t threshold_index) const;
  std::size_t record_count() const;

  friend bool operator==(const MatchSet&, const MatchSet&) = default;

 private:
  std::vector<CategoryId> categories_;
  std::vector<double> thresholds_;
  std::vector<MatchGroup> groups_;
};

double iou(const BoundingBox& a, const BoundingBox& b);

// Greedy confidence-ordered matching for one (image, category) pair.
// Records come back in processing order (score desc, id asc).
std::vector<MatchRecord> match_group(std::span<const Detection> dets,
                                     std::span<const GroundTruthInstance> gts, double threshold,
                                     bool not_exhaustive = false);

// Detections must already be federated-filtered and policy-limited.
// Detections the dataset does not evaluate are skipped.
MatchSet match_dataset(const Dataset& dataset, const DetectionSet& dets,
                       std::span<const double> thresholds, int threads = 1);

// Grouping and IoU matrices for one detection list, reusable across
// thresholds and across survivor subsets (sweeps re-match per policy
// without recomputing IoUs). Holds references: `dataset` and `dets` must
// outlive the plan.
class MatchPlan {
 public:
  MatchPlan(const Dataset& dataset, std::span<const Detection> dets, int threads = 1);

  // `keep`, when given, is indexed like `dets`; masked-out detections do not
  // take part in matching and produce no record.
  MatchSet match(std::span<const double> thresholds, const KeepMask* keep = nullptr,
                 int threads = 1) const;

  const std::vector<CategoryId>& categories() const { return category_ids_; }
  const std::vector<std::int64_t>& gt_counts() const { return n_gt_; }

 private:
  struct PairGroup {
    std::uint32_t det_begin = 0;  // positions in order_
    std::uint32_t det_end = 0;
    std::uint32_t gt_begin = 0;   // positions in gt_order_
    std::uint32_t gt_end = 0;
    std::uint32_t gt_non_ignore = 0;
    std::size_t iou_offset = 0;
    bool not_exhaustive = false;
  };

  const Dataset* dataset_;
  std::span<const Detection> dets_;
  std::vector<CategoryId> category_ids_;        // ascending
  std::vector<std::size_t> dataset_cat_index_;  // ascending position -> dataset index
  std::vector<std::int64_t> n_gt_;              // per ascending category position
  std::vector<std::uint32_t> order_;            // (category, image, rank) order
  std::vector<std::uint32_t> rank_positions_;   // per-category positions in rank order
  std::vector<std::size_t> category_begin_;     // category -> range in order_
  std::vector<PairGroup> pairs_;
  std::vector<std::uint32_t> gt_order_;
  std::vector<double> ious_;
};

}  // namespace lvap
