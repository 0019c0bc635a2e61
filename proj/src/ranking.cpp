#include "lvap/ranking.hpp"

#include <algorithm>
#include <unordered_map>

#include "lvap/parallel.hpp"

namespace lvap {

namespace {

// Buckets the entries of `dets` allowed by `allowed` by key and marks the
// top k of each bucket. Selection is nth_element under the strict total
// order (score desc, id asc), so the surviving set is unique.
template <typename KeyFn>
KeepMask top_k_mask(std::span<const Detection> dets, const KeepMask* allowed, std::int64_t k,
                    KeyFn key_of, int threads) {
  KeepMask mask(dets.size(), 0);
  std::unordered_map<std::int64_t, std::uint32_t> bucket_of;
  std::vector<std::uint32_t> bucket(dets.size());
  std::vector<std::size_t> counts;
  for (std::size_t i = 0; i < dets.size(); ++i) {
    if (allowed && !(*allowed)[i]) continue;
    auto [it, inserted] =
        bucket_of.try_emplace(key_of(dets[i]), static_cast<std::uint32_t>(counts.size()));
    if (inserted) counts.push_back(0);
    bucket[i] = it->second;
    ++counts[it->second];
  }
  std::vector<std::size_t> offsets(counts.size() + 1, 0);
  for (std::size_t b = 0; b < counts.size(); ++b) offsets[b + 1] = offsets[b] + counts[b];
  std::vector<std::uint32_t> members(offsets.back());
  {
    std::vector<std::size_t> cursor(offsets.begin(), offsets.end() - 1);
    for (std::size_t i = 0; i < dets.size(); ++i) {
      if (allowed && !(*allowed)[i]) continue;
      members[cursor[bucket[i]]++] = static_cast<std::uint32_t>(i);
    }
  }

  const auto by_rank = [&](std::uint32_t a, std::uint32_t b) {
    return ranks_before(dets[a], dets[b]);
  };
  parallel_for(counts.size(), threads, [&](std::size_t b) {
    auto first = members.begin() + static_cast<std::ptrdiff_t>(offsets[b]);
    auto last = members.begin() + static_cast<std::ptrdiff_t>(offsets[b + 1]);
    if (last - first > k) {
      std::nth_element(first, first + k, last, by_rank);
      last = first + k;
    }
    for (auto it = first; it != last; ++it) mask[*it] = 1;
  });
  return mask;
}

KeepMask image_mask(std::span<const Detection> dets, const KeepMask* allowed, std::int64_t n,
                    int threads) {
  return top_k_mask(dets, allowed, n, [](const Detection& d) { return d.image_id; }, threads);
}

KeepMask class_mask(std::span<const Detection> dets, const KeepMask* allowed, std::int64_t k,
                    int threads) {
  return top_k_mask(dets, allowed, k, [](const Detection& d) { return d.category_id; }, threads);
}

}  // namespace

DetectionSet select(const DetectionSet& dets, const KeepMask& mask) {
  DetectionSet out;
  out.clamped_scores = dets.clamped_scores;
  out.detections.reserve(
      static_cast<std::size_t>(std::count(mask.begin(), mask.end(), std::uint8_t{1})));
  for (std::size_t i = 0; i < dets.detections.size(); ++i) {
    if (mask[i]) out.detections.push_back(dets.detections[i]);
  }
  return out;
}

DetectionSet limit_per_image(const DetectionSet& dets, std::int64_t n, int threads) {
  if (n < 1) throw ConfigError("dets-per-image limit must be >= 1");
  return select(dets, image_mask(dets.detections, nullptr, n, threads));
}

DetectionSet limit_per_class(const DetectionSet& dets, std::int64_t k, int threads) {
  if (k < 1) throw ConfigError("dets-per-class limit must be >= 1");
  return select(dets, class_mask(dets.detections, nullptr, k, threads));
}

KeepMask policy_mask(std::span<const Detection> dets, const RankingPolicy& policy, int threads) {
  policy.validate();
  KeepMask mask(dets.size(), 1);
  if (policy.max_dets_per_class) {
    mask = class_mask(dets, nullptr, *policy.max_dets_per_class, threads);
  }
  if (policy.max_dets_per_image) {
    mask = image_mask(dets, &mask, *policy.max_dets_per_image, threads);
  }
  return mask;
}

DetectionSet apply_policy(const DetectionSet& dets, const RankingPolicy& policy, int threads) {
  if (!policy.max_dets_per_class && !policy.max_dets_per_image) return dets;
  return select(dets, policy_mask(dets.detections, policy, threads));
}

DetectionSet federated_filter(const Dataset& dataset, const DetectionSet& dets) {
  KeepMask mask(dets.detections.size(), 0);
  for (std::size_t i = 0; i < dets.detections.size(); ++i) {
    const auto& d = dets.detections[i];
    mask[i] = dataset.evaluates(d.image_id, d.category_id) ? 1 : 0;
  }
  return select(dets, mask);
}

}  // namespace lvap
