#include "lvap/core.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <sstream>

namespace lvap {

namespace {

void sort_unique(std::vector<CategoryId>& ids) {
  std::sort(ids.begin(), ids.end());
  ids.erase(std::unique(ids.begin(), ids.end()), ids.end());
}

bool contains_sorted(const std::vector<CategoryId>& ids, CategoryId id) {
  return std::binary_search(ids.begin(), ids.end(), id);
}

double parse_double(std::string_view text) {
  std::string owned(text);
  std::size_t used = 0;
  double value = 0.0;
  try {
    value = std::stod(owned, &used);
  } catch (const std::exception&) {
    throw ConfigError("not a number: '" + owned + "'");
  }
  if (used != owned.size()) throw ConfigError("not a number: '" + owned + "'");
  return value;
}

}  // namespace

bool BoundingBox::valid() const {
  return std::isfinite(x) && std::isfinite(y) && std::isfinite(w) && std::isfinite(h) &&
         w >= 0.0 && h >= 0.0;
}

const char* group_name(FrequencyGroup group) {
  switch (group) {
    case FrequencyGroup::Rare: return "rare";
    case FrequencyGroup::Common: return "common";
    case FrequencyGroup::Frequent: return "frequent";
    case FrequencyGroup::Unknown: return "unknown";
  }
  return "unknown";
}

const char* group_letter(FrequencyGroup group) {
  switch (group) {
    case FrequencyGroup::Rare: return "r";
    case FrequencyGroup::Common: return "c";
    case FrequencyGroup::Frequent: return "f";
    case FrequencyGroup::Unknown: return "u";
  }
  return "u";
}

std::optional<FrequencyGroup> parse_group(std::string_view text) {
  if (text == "r" || text == "rare") return FrequencyGroup::Rare;
  if (text == "c" || text == "common") return FrequencyGroup::Common;
  if (text == "f" || text == "frequent") return FrequencyGroup::Frequent;
  if (text == "u" || text == "unknown") return FrequencyGroup::Unknown;
  return std::nullopt;
}

FrequencyGroup frequency_group(const Category& category, const FrequencyThresholds& thresholds) {
  if (!category.image_count || *category.image_count <= 0) return FrequencyGroup::Unknown;
  const auto count = *category.image_count;
  if (count <= thresholds.rare_max) return FrequencyGroup::Rare;
  if (count <= thresholds.common_max) return FrequencyGroup::Common;
  return FrequencyGroup::Frequent;
}

bool ImageRecord::evaluates(CategoryId category) const {
  if (!federated) return true;
  return contains_sorted(positive_category_ids, category) ||
         contains_sorted(negative_category_ids, category);
}

bool ImageRecord::is_not_exhaustive(CategoryId category) const {
  return contains_sorted(not_exhaustive_category_ids, category);
}

std::vector<CategoryId> ImageRecord::evaluation_universe() const {
  std::vector<CategoryId> out;
  std::set_union(positive_category_ids.begin(), positive_category_ids.end(),
                 negative_category_ids.begin(), negative_category_ids.end(),
                 std::back_inserter(out));
  return out;
}

Dataset::Dataset(std::vector<Category> categories, std::vector<ImageRecord> images,
                 std::vector<GroundTruthInstance> instances)
    : categories_(std::move(categories)),
      images_(std::move(images)),
      instances_(std::move(instances)) {
  category_index_.reserve(categories_.size());
  for (std::size_t i = 0; i < categories_.size(); ++i) {
    const auto& c = categories_[i];
    if (c.image_count && *c.image_count < 0) {
      throw DatasetError("category " + std::to_string(c.id) + " has negative image_count");
    }
    if (!category_index_.emplace(c.id, i).second) {
      throw DatasetError("duplicate category id " + std::to_string(c.id));
    }
  }
  image_index_.reserve(images_.size());
  for (std::size_t i = 0; i < images_.size(); ++i) {
    if (!image_index_.emplace(images_[i].id, i).second) {
      throw DatasetError("duplicate image id " + std::to_string(images_[i].id));
    }
  }

  std::unordered_map<InstanceId, bool> seen_instances;
  seen_instances.reserve(instances_.size());
  for (const auto& inst : instances_) {
    if (!seen_instances.emplace(inst.id, true).second) {
      throw DatasetError("duplicate annotation id " + std::to_string(inst.id));
    }
    if (!image_index_.count(inst.image_id)) {
      throw DatasetError("annotation " + std::to_string(inst.id) + " cites unknown image " +
                         std::to_string(inst.image_id));
    }
    if (!category_index_.count(inst.category_id)) {
      throw DatasetError("annotation " + std::to_string(inst.id) + " cites unknown category " +
                         std::to_string(inst.category_id));
    }
  }

  // Annotated categories are always positive on their image.
  for (const auto& inst : instances_) {
    auto& image = images_[image_index_.at(inst.image_id)];
    if (image.federated) image.positive_category_ids.push_back(inst.category_id);
  }
  for (auto& image : images_) {
    sort_unique(image.positive_category_ids);
    sort_unique(image.negative_category_ids);
    sort_unique(image.not_exhaustive_category_ids);
    std::vector<CategoryId> overlap;
    std::set_intersection(image.positive_category_ids.begin(), image.positive_category_ids.end(),
                          image.negative_category_ids.begin(), image.negative_category_ids.end(),
                          std::back_inserter(overlap));
    if (!overlap.empty()) {
      throw DatasetError("image " + std::to_string(image.id) + " lists category " +
                         std::to_string(overlap.front()) + " as both positive and negative");
    }
    for (auto* ids : {&image.positive_category_ids, &image.negative_category_ids,
                      &image.not_exhaustive_category_ids}) {
      for (auto id : *ids) {
        if (!category_index_.count(id)) {
          throw DatasetError("image " + std::to_string(image.id) + " cites unknown category " +
                             std::to_string(id));
        }
      }
    }
  }
}

const Category* Dataset::find_category(CategoryId id) const {
  auto it = category_index_.find(id);
  return it == category_index_.end() ? nullptr : &categories_[it->second];
}

const ImageRecord* Dataset::find_image(ImageId id) const {
  auto it = image_index_.find(id);
  return it == image_index_.end() ? nullptr : &images_[it->second];
}

std::optional<std::size_t> Dataset::category_index(CategoryId id) const {
  auto it = category_index_.find(id);
  if (it == category_index_.end()) return std::nullopt;
  return it->second;
}

std::optional<std::size_t> Dataset::image_index(ImageId id) const {
  auto it = image_index_.find(id);
  if (it == image_index_.end()) return std::nullopt;
  return it->second;
}

bool Dataset::evaluates(ImageId image, CategoryId category) const {
  const auto* record = find_image(image);
  return record != nullptr && category_index_.count(category) && record->evaluates(category);
}

void RankingPolicy::validate() const {
  if (max_dets_per_image && *max_dets_per_image < 1) {
    throw ConfigError("dets-per-image limit must be >= 1");
  }
  if (max_dets_per_class && *max_dets_per_class < 1) {
    throw ConfigError("dets-per-class limit must be >= 1");
  }
}

std::string RankingPolicy::describe() const {
  auto fmt = [](const std::optional<std::int64_t>& v) {
    return v ? std::to_string(*v) : std::string("none");
  };
  return "dets/class=" + fmt(max_dets_per_class) + " dets/im=" + fmt(max_dets_per_image);
}

std::string Interpolation::describe() const {
  if (kind == Kind::Exact) return "exact";
  return "sampled:" + std::to_string(n_points);
}

Interpolation Interpolation::parse(std::string_view text) {
  if (text == "exact") return exact();
  if (text == "sampled") return sampled(101);
  constexpr std::string_view prefix = "sampled:";
  if (text.substr(0, prefix.size()) == prefix) {
    auto digits = text.substr(prefix.size());
    int n = 0;
    auto [ptr, ec] = std::from_chars(digits.data(), digits.data() + digits.size(), n);
    if (ec != std::errc() || ptr != digits.data() + digits.size()) {
      throw ConfigError("bad interpolation point count: '" + std::string(digits) + "'");
    }
    if (n < 2) throw ConfigError("sampled interpolation needs at least 2 points");
    return sampled(n);
  }
  throw ConfigError("unknown interpolation '" + std::string(text) + "'");
}

std::vector<double> default_iou_thresholds() {
  std::vector<double> out;
  for (int i = 0; i < 10; ++i) out.push_back(0.5 + 0.05 * i);
  return out;
}

void EvalConfig::validate() const {
  if (iou_thresholds.empty()) throw ConfigError("at least one IoU threshold is required");
  for (std::size_t i = 0; i < iou_thresholds.size(); ++i) {
    const double t = iou_thresholds[i];
    if (!(t > 0.0 && t <= 1.0)) throw ConfigError("IoU thresholds must lie in (0, 1]");
    if (i > 0 && !(t > iou_thresholds[i - 1])) {
      throw ConfigError("IoU thresholds must be strictly increasing");
    }
  }
  ranking_policy.validate();
  if (interpolation.kind == Interpolation::Kind::Sampled && interpolation.n_points < 2) {
    throw ConfigError("sampled interpolation needs at least 2 points");
  }
  if (!(frequency_thresholds.rare_max < frequency_thresholds.common_max)) {
    throw ConfigError("rare_max must be below common_max");
  }
  if (threads < 1) throw ConfigError("threads must be >= 1");
}

std::vector<double> parse_iou_list(std::string_view text) {
  std::vector<double> out;
  if (text.find(':') != std::string_view::npos) {
    std::vector<double> parts;
    std::size_t start = 0;
    while (true) {
      auto pos = text.find(':', start);
      parts.push_back(parse_double(text.substr(start, pos - start)));
      if (pos == std::string_view::npos) break;
      start = pos + 1;
    }
    if (parts.size() != 3 || !(parts[2] > 0.0)) {
      throw ConfigError("IoU range must be start:stop:step with a positive step");
    }
    // Integer stepping keeps 0.5:0.95:0.05 at exactly ten values.
    const auto steps = static_cast<long>(std::floor((parts[1] - parts[0]) / parts[2] + 1e-9));
    for (long i = 0; i <= steps; ++i) out.push_back(parts[0] + parts[2] * static_cast<double>(i));
    return out;
  }
  std::size_t start = 0;
  while (start <= text.size()) {
    auto pos = text.find(',', start);
    out.push_back(parse_double(text.substr(start, pos - start)));
    if (pos == std::string_view::npos) break;
    start = pos + 1;
  }
  return out;
}

}  // namespace lvap
