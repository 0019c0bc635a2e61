#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "lvap/core.hpp"

namespace lvap {

// One byte per input detection; 1 = survives. Bytes rather than bits so
// that parallel workers can write disjoint entries.
using KeepMask = std::vector<std::uint8_t>;

// Keeps the n best detections of every image, ranked by (score desc, id asc)
// across all categories. Output keeps the input order.
DetectionSet limit_per_image(const DetectionSet& dets, std::int64_t n, int threads = 1);

// Keeps the k best detections of every category over the whole set.
DetectionSet limit_per_class(const DetectionSet& dets, std::int64_t k, int threads = 1);

// Per-class limit first, then per-image limit; absent limits are skipped.
DetectionSet apply_policy(const DetectionSet& dets, const RankingPolicy& policy, int threads = 1);
KeepMask policy_mask(std::span<const Detection> dets, const RankingPolicy& policy,
                     int threads = 1);

// Drops detections whose category is outside their image's federated
// evaluation universe (or whose image/category the dataset does not know).
DetectionSet federated_filter(const Dataset& dataset, const DetectionSet& dets);

DetectionSet select(const DetectionSet& dets, const KeepMask& mask);

}  // namespace lvap
