#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <unordered_map>
#include <vector>

namespace lvap {

using ImageId = std::int64_t;
using CategoryId = std::int64_t;
using InstanceId = std::int64_t;
using DetectionId = std::int64_t;

// Corner-plus-size box, the layout used by COCO-style result files.
struct BoundingBox {
  double x = 0.0;
  double y = 0.0;
  double w = 0.0;
  double h = 0.0;

  double area() const { return w * h; }
  bool valid() const;

  friend bool operator==(const BoundingBox&, const BoundingBox&) = default;
};

enum class FrequencyGroup { Rare, Common, Frequent, Unknown };

const char* group_name(FrequencyGroup group);   // "rare", "common", ...
const char* group_letter(FrequencyGroup group); // "r", "c", "f", "u"
std::optional<FrequencyGroup> parse_group(std::string_view text);

struct FrequencyThresholds {
  std::int64_t rare_max = 10;
  std::int64_t common_max = 100;

  friend bool operator==(const FrequencyThresholds&, const FrequencyThresholds&) = default;
};

struct Category {
  CategoryId id = 0;
  std::string name;
  std::optional<std::int64_t> image_count;

  friend bool operator==(const Category&, const Category&) = default;
};

FrequencyGroup frequency_group(const Category& category, const FrequencyThresholds& thresholds);

// Federated annotation state for one image. When `federated` is false the
// image carries no LVIS fields and every category is evaluated on it.
struct ImageRecord {
  ImageId id = 0;
  bool federated = false;
  std::vector<CategoryId> positive_category_ids;       // sorted, unique
  std::vector<CategoryId> negative_category_ids;       // sorted, unique
  std::vector<CategoryId> not_exhaustive_category_ids; // sorted, unique

  bool evaluates(CategoryId category) const;
  bool is_not_exhaustive(CategoryId category) const;
  std::vector<CategoryId> evaluation_universe() const;

  friend bool operator==(const ImageRecord&, const ImageRecord&) = default;
};

struct GroundTruthInstance {
  InstanceId id = 0;
  ImageId image_id = 0;
  CategoryId category_id = 0;
  BoundingBox bbox;
  bool ignore = false;

  friend bool operator==(const GroundTruthInstance&, const GroundTruthInstance&) = default;
};

struct Detection {
  DetectionId id = 0;
  ImageId image_id = 0;
  CategoryId category_id = 0;
  BoundingBox bbox;
  double score = 0.0;

  friend bool operator==(const Detection&, const Detection&) = default;
};

// (score desc, id asc): the one ordering used for every ranking decision.
inline bool ranks_before(double score_a, DetectionId id_a, double score_b, DetectionId id_b) {
  if (score_a != score_b) return score_a > score_b;
  return id_a < id_b;
}
inline bool ranks_before(const Detection& a, const Detection& b) {
  return ranks_before(a.score, a.id, b.score, b.id);
}

struct DatasetError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Immutable groundtruth corpus. The constructor validates referential
// integrity and normalizes the federated sets.
class Dataset {
 public:
  Dataset() = default;
  Dataset(std::vector<Category> categories, std::vector<ImageRecord> images,
          std::vector<GroundTruthInstance> instances);

  const std::vector<Category>& categories() const { return categories_; }
  const std::vector<ImageRecord>& images() const { return images_; }
  const std::vector<GroundTruthInstance>& instances() const { return instances_; }

  const Category* find_category(CategoryId id) const;
  const ImageRecord* find_image(ImageId id) const;
  std::optional<std::size_t> category_index(CategoryId id) const;
  std::optional<std::size_t> image_index(ImageId id) const;

  // True when `category` is in the evaluation universe of `image`.
  bool evaluates(ImageId image, CategoryId category) const;

  friend bool operator==(const Dataset& a, const Dataset& b) {
    return a.categories_ == b.categories_ && a.images_ == b.images_ &&
           a.instances_ == b.instances_;
  }

 private:
  std::vector<Category> categories_;
  std::vector<ImageRecord> images_;
  std::vector<GroundTruthInstance> instances_;
  std::unordered_map<CategoryId, std::size_t> category_index_;
  std::unordered_map<ImageId, std::size_t> image_index_;
};

struct DetectionSet {
  std::vector<Detection> detections;  // ids strictly increasing
  std::size_t clamped_scores = 0;

  std::size_t size() const { return detections.size(); }
  bool empty() const { return detections.empty(); }

  friend bool operator==(const DetectionSet& a, const DetectionSet& b) {
    return a.detections == b.detections;
  }
};

// Which detections survive before matching. Per-class limit is applied
// first (dataset-wide), then the per-image limit.
struct RankingPolicy {
  std::optional<std::int64_t> max_dets_per_image;
  std::optional<std::int64_t> max_dets_per_class;

  static RankingPolicy ap_old() { return {300, std::nullopt}; }
  static RankingPolicy ap_fixed() { return {std::nullopt, 10000}; }

  void validate() const;
  std::string describe() const;

  friend bool operator==(const RankingPolicy&, const RankingPolicy&) = default;
};

struct Interpolation {
  enum class Kind { Exact, Sampled };
  Kind kind = Kind::Sampled;
  int n_points = 101;

  static Interpolation exact() { return {Kind::Exact, 0}; }
  static Interpolation sampled(int n) { return {Kind::Sampled, n}; }

  std::string describe() const;  // "exact" or "sampled:N"
  static Interpolation parse(std::string_view text);

  friend bool operator==(const Interpolation&, const Interpolation&) = default;
};

struct ConfigError : std::invalid_argument {
  using std::invalid_argument::invalid_argument;
};

std::vector<double> default_iou_thresholds();

struct EvalConfig {
  std::vector<double> iou_thresholds = default_iou_thresholds();
  RankingPolicy ranking_policy = RankingPolicy::ap_fixed();
  Interpolation interpolation;
  FrequencyThresholds frequency_thresholds;
  bool include_pooled = false;
  // Execution knob only; never changes a numeric result.
  int threads = 1;

  void validate() const;
};

// Parses "0.5", "0.5,0.75" or "0.5:0.95:0.05" (inclusive range).
std::vector<double> parse_iou_list(std::string_view text);

}  // namespace lvap
