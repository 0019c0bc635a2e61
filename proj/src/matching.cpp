#include "lvap/matching.hpp"

#include <algorithm>
#include <numeric>
#include <stdexcept>
#include <unordered_map>

#include "lvap/parallel.hpp"

namespace lvap {

namespace {

constexpr std::int64_t kNoMatch = -1;

// Greedy assignment over a row-major IoU matrix. Detections are in rank
// order; groundtruth columns hold the non-ignore instances first (id asc),
// then the ignore regions (id asc), so a strict '>' scan implements the
// lower-id tie-break. Ignore regions are never consumed.
void greedy_assign(std::size_t n_det, std::size_t n_gt, std::size_t n_non_ignore,
                   const double* ious, const std::uint8_t* active, double threshold,
                   bool not_exhaustive, Outcome* outcome, std::int64_t* matched) {
  std::vector<std::uint8_t> used(n_gt, 0);
  for (std::size_t d = 0; d < n_det; ++d) {
    if (active && !active[d]) continue;
    const double* row = ious + d * n_gt;
    std::int64_t best = kNoMatch;
    double best_iou = 0.0;
    for (std::size_t g = 0; g < n_non_ignore; ++g) {
      if (used[g] || row[g] < threshold) continue;
      if (best == kNoMatch || row[g] > best_iou) {
        best = static_cast<std::int64_t>(g);
        best_iou = row[g];
      }
    }
    if (best != kNoMatch) {
      used[static_cast<std::size_t>(best)] = 1;
      outcome[d] = Outcome::TruePositive;
      matched[d] = best;
      continue;
    }
    for (std::size_t g = n_non_ignore; g < n_gt; ++g) {
      if (row[g] < threshold) continue;
      if (best == kNoMatch || row[g] > best_iou) {
        best = static_cast<std::int64_t>(g);
        best_iou = row[g];
      }
    }
    if (best != kNoMatch) {
      outcome[d] = Outcome::Ignored;
      matched[d] = best;
    } else {
      outcome[d] = not_exhaustive ? Outcome::Ignored : Outcome::FalsePositive;
      matched[d] = kNoMatch;
    }
  }
}

bool gt_column_before(const GroundTruthInstance& a, const GroundTruthInstance& b) {
  if (a.ignore != b.ignore) return !a.ignore;
  return a.id < b.id;
}

}  // namespace

const char* outcome_name(Outcome outcome) {
  switch (outcome) {
    case Outcome::TruePositive: return "tp";
    case Outcome::FalsePositive: return "fp";
    case Outcome::Ignored: return "ignored";
  }
  return "?";
}

std::int64_t MatchGroup::count(Outcome outcome) const {
  return std::count_if(records.begin(), records.end(),
                       [outcome](const MatchRecord& r) { return r.outcome == outcome; });
}

MatchSet::MatchSet(std::vector<CategoryId> categories, std::vector<double> thresholds,
                   std::vector<MatchGroup> groups)
    : categories_(std::move(categories)),
      thresholds_(std::move(thresholds)),
      groups_(std::move(groups)) {
  if (groups_.size() != categories_.size() * thresholds_.size()) {
    throw std::invalid_argument("MatchSet: group count does not match categories x thresholds");
  }
}

const MatchGroup& MatchSet::group(std::size_t category_index, std::size_t threshold_index) const {
  return groups_.at(category_index * thresholds_.size() + threshold_index);
}

const MatchGroup* MatchSet::find(CategoryId category, std::size_t threshold_index) const {
  auto it = std::lower_bound(categories_.begin(), categories_.end(), category);
  if (it == categories_.end() || *it != category) return nullptr;
  return &group(static_cast<std::size_t>(it - categories_.begin()), threshold_index);
}

std::size_t MatchSet::record_count() const {
  std::size_t n = 0;
  for (const auto& g : groups_) n += g.records.size();
  return n;
}

double iou(const BoundingBox& a, const BoundingBox& b) {
  const double ix = std::min(a.x + a.w, b.x + b.w) - std::max(a.x, b.x);
  const double iy = std::min(a.y + a.h, b.y + b.h) - std::max(a.y, b.y);
  if (ix <= 0.0 || iy <= 0.0) return 0.0;
  const double inter = ix * iy;
  const double uni = a.area() + b.area() - inter;
  if (uni <= 0.0) return 0.0;
  return std::clamp(inter / uni, 0.0, 1.0);
}

std::vector<MatchRecord> match_group(std::span<const Detection> dets,
                                     std::span<const GroundTruthInstance> gts, double threshold,
                                     bool not_exhaustive) {
  std::vector<const Detection*> ranked;
  ranked.reserve(dets.size());
  for (const auto& d : dets) ranked.push_back(&d);
  std::sort(ranked.begin(), ranked.end(),
            [](const Detection* a, const Detection* b) { return ranks_before(*a, *b); });

  std::vector<const GroundTruthInstance*> columns;
  columns.reserve(gts.size());
  for (const auto& g : gts) columns.push_back(&g);
  std::sort(columns.begin(), columns.end(),
            [](const auto* a, const auto* b) { return gt_column_before(*a, *b); });
  const auto n_non_ignore = static_cast<std::size_t>(std::count_if(
      columns.begin(), columns.end(), [](const auto* g) { return !g->ignore; }));

  std::vector<double> ious(ranked.size() * columns.size());
  for (std::size_t d = 0; d < ranked.size(); ++d) {
    for (std::size_t g = 0; g < columns.size(); ++g) {
      ious[d * columns.size() + g] = iou(ranked[d]->bbox, columns[g]->bbox);
    }
  }
  std::vector<Outcome> outcome(ranked.size());
  std::vector<std::int64_t> matched(ranked.size(), kNoMatch);
  greedy_assign(ranked.size(), columns.size(), n_non_ignore, ious.data(), nullptr, threshold,
                not_exhaustive, outcome.data(), matched.data());

  std::vector<MatchRecord> records;
  records.reserve(ranked.size());
  for (std::size_t d = 0; d < ranked.size(); ++d) {
    const auto& det = *ranked[d];
    records.push_back({det.id, det.category_id, det.image_id, det.score, threshold, outcome[d],
                       matched[d] == kNoMatch
                           ? kNoMatch
                           : columns[static_cast<std::size_t>(matched[d])]->id});
  }
  return records;
}

MatchPlan::MatchPlan(const Dataset& dataset, std::span<const Detection> dets, int threads)
    : dataset_(&dataset), dets_(dets) {
  const auto& categories = dataset.categories();
  std::vector<std::size_t> by_id(categories.size());
  std::iota(by_id.begin(), by_id.end(), std::size_t{0});
  std::sort(by_id.begin(), by_id.end(),
            [&](std::size_t a, std::size_t b) { return categories[a].id < categories[b].id; });
  dataset_cat_index_ = by_id;
  std::unordered_map<CategoryId, std::uint32_t> position_of;
  position_of.reserve(categories.size());
  for (std::size_t p = 0; p < by_id.size(); ++p) {
    category_ids_.push_back(categories[by_id[p]].id);
    position_of.emplace(categories[by_id[p]].id, static_cast<std::uint32_t>(p));
  }
  const std::size_t n_cat = category_ids_.size();

  struct Keyed {
    std::uint32_t category;
    std::uint32_t image;
    std::uint32_t index;
  };

  // Detections, grouped by (category, image) and ranked inside each pair.
  std::vector<Keyed> keyed;
  keyed.reserve(dets.size());
  for (std::size_t i = 0; i < dets.size(); ++i) {
    const auto& d = dets[i];
    const auto* image = dataset.find_image(d.image_id);
    auto cat = position_of.find(d.category_id);
    if (image == nullptr || cat == position_of.end() || !image->evaluates(d.category_id)) {
      continue;
    }
    keyed.push_back({cat->second, static_cast<std::uint32_t>(*dataset.image_index(d.image_id)),
                     static_cast<std::uint32_t>(i)});
  }
  std::sort(keyed.begin(), keyed.end(), [&](const Keyed& a, const Keyed& b) {
    if (a.category != b.category) return a.category < b.category;
    if (a.image != b.image) return a.image < b.image;
    return ranks_before(dets[a.index], dets[b.index]);
  });
  order_.reserve(keyed.size());
  for (const auto& k : keyed) order_.push_back(k.index);

  // Groundtruth, grouped the same way; non-ignore columns first.
  const auto& instances = dataset.instances();
  std::vector<Keyed> gt_keyed;
  gt_keyed.reserve(instances.size());
  n_gt_.assign(n_cat, 0);
  for (std::size_t i = 0; i < instances.size(); ++i) {
    const auto& inst = instances[i];
    const auto* image = dataset.find_image(inst.image_id);
    if (!image->evaluates(inst.category_id)) continue;
    const auto cat = position_of.at(inst.category_id);
    if (!inst.ignore) ++n_gt_[cat];
    gt_keyed.push_back({cat, static_cast<std::uint32_t>(*dataset.image_index(inst.image_id)),
                        static_cast<std::uint32_t>(i)});
  }
  std::sort(gt_keyed.begin(), gt_keyed.end(), [&](const Keyed& a, const Keyed& b) {
    if (a.category != b.category) return a.category < b.category;
    if (a.image != b.image) return a.image < b.image;
    return gt_column_before(instances[a.index], instances[b.index]);
  });
  gt_order_.reserve(gt_keyed.size());
  for (const auto& k : gt_keyed) gt_order_.push_back(k.index);

  const auto pair_less = [](const Keyed& a, const Keyed& b) {
    return a.category != b.category ? a.category < b.category : a.image < b.image;
  };
  category_begin_.assign(n_cat + 1, 0);
  std::size_t iou_total = 0;
  for (std::size_t pos = 0; pos < keyed.size();) {
    std::size_t end = pos + 1;
    while (end < keyed.size() && keyed[end].category == keyed[pos].category &&
           keyed[end].image == keyed[pos].image) {
      ++end;
    }
    PairGroup pair;
    pair.det_begin = static_cast<std::uint32_t>(pos);
    pair.det_end = static_cast<std::uint32_t>(end);
    auto [lo, hi] = std::equal_range(gt_keyed.begin(), gt_keyed.end(), keyed[pos], pair_less);
    pair.gt_begin = static_cast<std::uint32_t>(lo - gt_keyed.begin());
    pair.gt_end = static_cast<std::uint32_t>(hi - gt_keyed.begin());
    pair.gt_non_ignore = static_cast<std::uint32_t>(
        std::count_if(lo, hi, [&](const Keyed& k) { return !instances[k.index].ignore; }));
    pair.iou_offset = iou_total;
    const auto& image = dataset.images()[keyed[pos].image];
    pair.not_exhaustive = image.is_not_exhaustive(category_ids_[keyed[pos].category]);
    iou_total += (end - pos) * (pair.gt_end - pair.gt_begin);
    pairs_.push_back(pair);
    pos = end;
  }
  for (const auto& k : keyed) ++category_begin_[k.category + 1];
  for (std::size_t c = 0; c < n_cat; ++c) category_begin_[c + 1] += category_begin_[c];

  ious_.assign(iou_total, 0.0);
  parallel_for(pairs_.size(), threads, [&](std::size_t p) {
    const auto& pair = pairs_[p];
    const std::size_t n_gt = pair.gt_end - pair.gt_begin;
    double* out = ious_.data() + pair.iou_offset;
    for (std::uint32_t d = pair.det_begin; d < pair.det_end; ++d) {
      const auto& box = dets_[order_[d]].bbox;
      for (std::size_t g = 0; g < n_gt; ++g) {
        *out++ = iou(box, instances[gt_order_[pair.gt_begin + g]].bbox);
      }
    }
  });

  rank_positions_.resize(order_.size());
  std::iota(rank_positions_.begin(), rank_positions_.end(), std::uint32_t{0});
  parallel_for(n_cat, threads, [&](std::size_t c) {
    auto first = rank_positions_.begin() + static_cast<std::ptrdiff_t>(category_begin_[c]);
    auto last = rank_positions_.begin() + static_cast<std::ptrdiff_t>(category_begin_[c + 1]);
    std::sort(first, last, [&](std::uint32_t a, std::uint32_t b) {
      return ranks_before(dets_[order_[a]], dets_[order_[b]]);
    });
  });
}

MatchSet MatchPlan::match(std::span<const double> thresholds, const KeepMask* keep,
                          int threads) const {
  if (keep && keep->size() != dets_.size()) {
    throw std::invalid_argument("MatchPlan::match: keep mask size mismatch");
  }
  const std::size_t n_cat = category_ids_.size();
  const std::size_t n_thr = thresholds.size();
  const auto& instances = dataset_->instances();
  std::vector<MatchGroup> groups(n_cat * n_thr);

  std::vector<std::uint8_t> active;
  if (keep) {
    active.resize(order_.size());
    for (std::size_t pos = 0; pos < order_.size(); ++pos) active[pos] = (*keep)[order_[pos]];
  }
  std::vector<Outcome> outcome(order_.size());
  std::vector<std::int64_t> matched(order_.size(), kNoMatch);

  for (std::size_t t = 0; t < n_thr; ++t) {
    const double threshold = thresholds[t];
    parallel_for(pairs_.size(), threads, [&](std::size_t p) {
      const auto& pair = pairs_[p];
      greedy_assign(pair.det_end - pair.det_begin, pair.gt_end - pair.gt_begin,
                    pair.gt_non_ignore, ious_.data() + pair.iou_offset,
                    keep ? active.data() + pair.det_begin : nullptr, threshold,
                    pair.not_exhaustive, outcome.data() + pair.det_begin,
                    matched.data() + pair.det_begin);
      for (std::uint32_t d = pair.det_begin; d < pair.det_end; ++d) {
        if (matched[d] != kNoMatch) {
          matched[d] = instances[gt_order_[pair.gt_begin + static_cast<std::size_t>(matched[d])]].id;
        }
      }
    });
    parallel_for(n_cat, threads, [&](std::size_t c) {
      auto& group = groups[c * n_thr + t];
      group.category_id = category_ids_[c];
      group.iou_threshold = threshold;
      group.n_gt = n_gt_[c];
      group.records.reserve(category_begin_[c + 1] - category_begin_[c]);
      for (std::size_t r = category_begin_[c]; r < category_begin_[c + 1]; ++r) {
        const auto pos = rank_positions_[r];
        if (keep && !active[pos]) continue;
        const auto& det = dets_[order_[pos]];
        group.records.push_back({det.id, det.category_id, det.image_id, det.score, threshold,
                                 outcome[pos], matched[pos]});
      }
    });
  }
  return MatchSet(category_ids_, std::vector<double>(thresholds.begin(), thresholds.end()),
                  std::move(groups));
}

MatchSet match_dataset(const Dataset& dataset, const DetectionSet& dets,
                       std::span<const double> thresholds, int threads) {
  MatchPlan plan(dataset, dets.detections, threads);
  return plan.match(thresholds, nullptr, threads);
}

}  // namespace lvap
