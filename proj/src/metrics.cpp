#include "lvap/metrics.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <numeric>

#include "lvap/parallel.hpp"
#include "lvap/ranking.hpp"

namespace lvap {

namespace {

using Clock = std::chrono::steady_clock;

double elapsed_ms(Clock::time_point since) {
  return std::chrono::duration<double, std::milli>(Clock::now() - since).count();
}

std::optional<double> mean_of(const std::vector<std::optional<double>>& values) {
  double sum = 0.0;
  std::int64_t n = 0;
  for (const auto& v : values) {
    if (!v) continue;
    sum += *v;
    ++n;
  }
  if (n == 0) return std::nullopt;
  return sum / static_cast<double>(n);
}

bool records_ranked(std::span<const MatchRecord> records) {
  return std::is_sorted(records.begin(), records.end(),
                        [](const MatchRecord& a, const MatchRecord& b) {
                          return ranks_before(a.score, a.detection_id, b.score, b.detection_id);
                        });
}

struct PooledEntry {
  double score;
  DetectionId id;
  std::uint8_t tp;
  FrequencyGroup group;
};

// AP^Pool (and group diagnostics) for threshold index t of `matches`.
GroupMeans pooled_at(const MatchSet& matches, std::size_t t, const Dataset& dataset,
                     const FrequencyThresholds& thresholds, const Interpolation& interpolation,
                     std::vector<PRPoint>* pooled_samples, int sample_points) {
  std::vector<PooledEntry> entries;
  std::int64_t n_gt_all = 0;
  std::int64_t n_gt_group[3] = {0, 0, 0};
  std::size_t total = 0;
  for (std::size_t c = 0; c < matches.categories().size(); ++c) {
    total += matches.group(c, t).records.size();
  }
  entries.reserve(total);
  for (std::size_t c = 0; c < matches.categories().size(); ++c) {
    const auto& group = matches.group(c, t);
    const auto* category = dataset.find_category(group.category_id);
    const auto fg = category ? frequency_group(*category, thresholds) : FrequencyGroup::Unknown;
    n_gt_all += group.n_gt;
    if (fg != FrequencyGroup::Unknown) n_gt_group[static_cast<int>(fg)] += group.n_gt;
    for (const auto& r : group.records) {
      if (r.outcome == Outcome::Ignored) continue;
      entries.push_back(
          {r.score, r.detection_id, static_cast<std::uint8_t>(r.outcome == Outcome::TruePositive),
           fg});
    }
  }
  std::sort(entries.begin(), entries.end(), [](const PooledEntry& a, const PooledEntry& b) {
    return ranks_before(a.score, a.id, b.score, b.id);
  });

  GroupMeans out;
  std::vector<std::uint8_t> flags;
  flags.reserve(entries.size());
  for (const auto& e : entries) flags.push_back(e.tp);
  if (n_gt_all > 0) {
    const auto curve = pr_curve_from_flags(flags, n_gt_all);
    out.all = average_precision(curve, interpolation);
    if (pooled_samples) *pooled_samples = sample_envelope(curve, sample_points);
  }
  const FrequencyGroup groups[3] = {FrequencyGroup::Rare, FrequencyGroup::Common,
                                    FrequencyGroup::Frequent};
  std::optional<double>* slots[3] = {&out.rare, &out.common, &out.frequent};
  for (int g = 0; g < 3; ++g) {
    if (n_gt_group[g] == 0) continue;
    flags.clear();
    for (const auto& e : entries) {
      if (e.group == groups[g]) flags.push_back(e.tp);
    }
    *slots[g] = average_precision(pr_curve_from_flags(flags, n_gt_group[g]), interpolation);
  }
  return out;
}

PooledResult average_pooled(const std::vector<GroupMeans>& per_threshold) {
  PooledResult result;
  std::vector<std::optional<double>> all, rare, common, frequent;
  for (const auto& m : per_threshold) {
    all.push_back(m.all);
    rare.push_back(m.rare);
    common.push_back(m.common);
    frequent.push_back(m.frequent);
  }
  result.ap_per_threshold = all;
  result.ap = {mean_of(all), mean_of(rare), mean_of(common), mean_of(frequent)};
  return result;
}

// Shared by evaluate and sweep: `mask` selects the ranking policy's
// survivors among the detections the plan was built on.
EvalReport evaluate_masked(const Dataset& dataset, const MatchPlan& plan, const KeepMask& mask,
                           const EvalConfig& config, EvalCurves* curves) {
  const auto& thresholds = config.iou_thresholds;
  const std::size_t n_thr = thresholds.size();
  const auto& category_ids = plan.categories();
  const std::size_t n_cat = category_ids.size();

  EvalReport report;
  report.iou_thresholds = thresholds;
  report.policy = config.ranking_policy;
  report.interpolation = config.interpolation;
  report.frequency_thresholds = config.frequency_thresholds;
  report.evaluated_detections = std::count(mask.begin(), mask.end(), std::uint8_t{1});

  report.classes.resize(n_cat);
  for (std::size_t c = 0; c < n_cat; ++c) {
    auto& cls = report.classes[c];
    const auto* category = dataset.find_category(category_ids[c]);
    cls.category_id = category_ids[c];
    cls.name = category->name;
    cls.group = frequency_group(*category, config.frequency_thresholds);
    cls.n_gt = plan.gt_counts()[c];
    cls.ap_per_threshold.assign(n_thr, std::nullopt);
  }

  std::vector<GroupMeans> pooled_per_threshold;
  if (curves) {
    curves->series.clear();
    curves->n_points = 101;
  }
  std::vector<std::vector<PRPoint>> class_samples(curves ? n_cat : 0);

  for (std::size_t t = 0; t < n_thr; ++t) {
    const double threshold = thresholds[t];
    const MatchSet matches = plan.match(std::span(&threshold, 1), &mask, config.threads);
    parallel_for(n_cat, config.threads, [&](std::size_t c) {
      const auto& group = matches.group(c, 0);
      auto& cls = report.classes[c];
      cls.n_dets = static_cast<std::int64_t>(group.records.size());
      if (group.n_gt == 0) return;
      const auto curve = pr_curve(group.records, group.n_gt);
      cls.ap_per_threshold[t] = average_precision(curve, config.interpolation);
      if (curves && t == 0) class_samples[c] = sample_envelope(curve, curves->n_points);
    });
    if (config.include_pooled) {
      std::vector<PRPoint> pooled_samples;
      pooled_per_threshold.push_back(pooled_at(matches, 0, dataset, config.frequency_thresholds,
                                               config.interpolation,
                                               curves ? &pooled_samples : nullptr,
                                               curves ? curves->n_points : 0));
      if (curves && !pooled_samples.empty()) {
        curves->series.push_back({std::nullopt, threshold, std::move(pooled_samples)});
      }
    }
  }
  if (curves) {
    for (std::size_t c = 0; c < n_cat; ++c) {
      if (class_samples[c].empty()) continue;
      curves->series.push_back({category_ids[c], thresholds[0], std::move(class_samples[c])});
    }
  }

  report.ap_per_threshold.assign(n_thr, std::nullopt);
  for (std::size_t t = 0; t < n_thr; ++t) {
    std::vector<std::optional<double>> column;
    for (const auto& cls : report.classes) column.push_back(cls.ap_per_threshold[t]);
    report.ap_per_threshold[t] = mean_of(column);
  }
  std::vector<std::optional<double>> rare, common, frequent;
  for (auto& cls : report.classes) {
    cls.ap = mean_of(cls.ap_per_threshold);
    if (cls.ap) ++report.evaluated_classes;
    switch (cls.group) {
      case FrequencyGroup::Rare: rare.push_back(cls.ap); break;
      case FrequencyGroup::Common: common.push_back(cls.ap); break;
      case FrequencyGroup::Frequent: frequent.push_back(cls.ap); break;
      case FrequencyGroup::Unknown: break;
    }
  }
  report.ap = {mean_of(report.ap_per_threshold), mean_of(rare), mean_of(common),
               mean_of(frequent)};
  if (config.include_pooled) report.pooled = average_pooled(pooled_per_threshold);
  return report;
}

}  // namespace

std::optional<double> GroupMeans::get(std::optional<FrequencyGroup> group) const {
  if (!group) return all;
  switch (*group) {
    case FrequencyGroup::Rare: return rare;
    case FrequencyGroup::Common: return common;
    case FrequencyGroup::Frequent: return frequent;
    case FrequencyGroup::Unknown: return std::nullopt;
  }
  return std::nullopt;
}

PRCurve pr_curve_from_flags(std::span<const std::uint8_t> is_tp, std::int64_t n_gt) {
  if (n_gt <= 0) throw UndefinedCurve();
  PRCurve curve;
  curve.n_gt = n_gt;
  curve.points.reserve(is_tp.size());
  std::int64_t tp = 0;
  std::int64_t fp = 0;
  for (auto flag : is_tp) {
    if (flag) {
      ++tp;
    } else {
      ++fp;
    }
    curve.points.push_back({static_cast<double>(tp) / static_cast<double>(n_gt),
                            static_cast<double>(tp) / static_cast<double>(tp + fp)});
  }
  curve.envelope.resize(curve.points.size());
  double running = 0.0;
  for (std::size_t i = curve.points.size(); i-- > 0;) {
    running = std::max(running, curve.points[i].precision);
    curve.envelope[i] = running;
  }
  return curve;
}

PRCurve pr_curve(std::span<const MatchRecord> records, std::int64_t n_gt) {
  if (n_gt <= 0) throw UndefinedCurve();
  std::vector<const MatchRecord*> ranked;
  ranked.reserve(records.size());
  for (const auto& r : records) {
    if (r.outcome != Outcome::Ignored) ranked.push_back(&r);
  }
  if (!records_ranked(records)) {
    std::sort(ranked.begin(), ranked.end(), [](const MatchRecord* a, const MatchRecord* b) {
      return ranks_before(a->score, a->detection_id, b->score, b->detection_id);
    });
  }
  std::vector<std::uint8_t> flags;
  flags.reserve(ranked.size());
  for (const auto* r : ranked) flags.push_back(r->outcome == Outcome::TruePositive ? 1 : 0);
  return pr_curve_from_flags(flags, n_gt);
}

double average_precision(const PRCurve& curve, const Interpolation& interpolation) {
  if (curve.n_gt <= 0) throw UndefinedCurve();
  const auto& points = curve.points;
  if (interpolation.kind == Interpolation::Kind::Exact) {
    // Recall grows by exactly 1/n_gt at each true positive.
    double sum = 0.0;
    double previous_recall = 0.0;
    for (std::size_t i = 0; i < points.size(); ++i) {
      if (points[i].recall > previous_recall) {
        sum += curve.envelope[i];
        previous_recall = points[i].recall;
      }
    }
    return sum / static_cast<double>(curve.n_gt);
  }
  const auto samples = sample_envelope(curve, interpolation.n_points);
  double sum = 0.0;
  for (const auto& s : samples) sum += s.precision;
  return sum / static_cast<double>(samples.size());
}

std::vector<PRPoint> sample_envelope(const PRCurve& curve, int n_points) {
  if (n_points < 2) throw ConfigError("sampled interpolation needs at least 2 points");
  // Grid built like numpy.linspace(0, 1, n): j * step, last point pinned to 1.
  const double step = 1.0 / static_cast<double>(n_points - 1);
  std::vector<PRPoint> out;
  out.reserve(static_cast<std::size_t>(n_points));
  const auto& points = curve.points;
  std::size_t cursor = 0;
  for (int j = 0; j < n_points; ++j) {
    const double r = (j == n_points - 1) ? 1.0 : static_cast<double>(j) * step;
    while (cursor < points.size() && points[cursor].recall < r) ++cursor;
    out.push_back({r, cursor < points.size() ? curve.envelope[cursor] : 0.0});
  }
  return out;
}

EvalReport evaluate(const Dataset& dataset, const DetectionSet& dets, const EvalConfig& config,
                    EvalCurves* curves) {
  config.validate();
  const auto start = Clock::now();
  RuntimeStats runtime;

  auto t0 = Clock::now();
  const DetectionSet filtered = federated_filter(dataset, dets);
  runtime.filter_ms = elapsed_ms(t0);

  t0 = Clock::now();
  const KeepMask mask = policy_mask(filtered.detections, config.ranking_policy, config.threads);
  runtime.policy_ms = elapsed_ms(t0);

  // Only survivors need IoUs; build the plan over them.
  t0 = Clock::now();
  const DetectionSet survivors = select(filtered, mask);
  const KeepMask all(survivors.size(), 1);
  const MatchPlan plan(dataset, survivors.detections, config.threads);
  runtime.plan_ms = elapsed_ms(t0);

  t0 = Clock::now();
  EvalReport report = evaluate_masked(dataset, plan, all, config, curves);
  runtime.match_and_score_ms = elapsed_ms(t0);
  runtime.total_ms = elapsed_ms(start);

  report.input_detections = static_cast<std::int64_t>(dets.size());
  report.runtime = runtime;
  return report;
}

PooledResult pooled_from_matches(const MatchSet& matches, const Dataset& dataset,
                                 const FrequencyThresholds& thresholds,
                                 const Interpolation& interpolation) {
  std::vector<GroupMeans> per_threshold;
  for (std::size_t t = 0; t < matches.thresholds().size(); ++t) {
    per_threshold.push_back(pooled_at(matches, t, dataset, thresholds, interpolation, nullptr, 0));
  }
  return average_pooled(per_threshold);
}

PooledResult evaluate_pooled(const Dataset& dataset, const DetectionSet& dets,
                             const EvalConfig& config) {
  config.validate();
  const DetectionSet filtered = federated_filter(dataset, dets);
  const DetectionSet survivors = apply_policy(filtered, config.ranking_policy, config.threads);
  const MatchSet matches =
      match_dataset(dataset, survivors, config.iou_thresholds, config.threads);
  return pooled_from_matches(matches, dataset, config.frequency_thresholds, config.interpolation);
}

const GroupScoreStats& ScoreDistribution::of(FrequencyGroup group) const {
  for (const auto& g : groups) {
    if (g.group == group) return g;
  }
  throw std::out_of_range("score distribution has no such group");
}

ScoreDistribution score_distribution(const DetectionSet& dets, const Dataset& dataset,
                                     const FrequencyThresholds& thresholds, int bins) {
  if (bins < 1) throw ConfigError("histogram needs at least one bin");
  ScoreDistribution out;
  out.bins = bins;
  const FrequencyGroup order[4] = {FrequencyGroup::Rare, FrequencyGroup::Common,
                                   FrequencyGroup::Frequent, FrequencyGroup::Unknown};
  double sums[4] = {0, 0, 0, 0};
  for (auto g : order) {
    GroupScoreStats stats;
    stats.group = g;
    stats.histogram.assign(static_cast<std::size_t>(bins), 0);
    out.groups.push_back(stats);
  }
  for (const auto& d : dets.detections) {
    const auto* category = dataset.find_category(d.category_id);
    const auto g = category ? frequency_group(*category, thresholds) : FrequencyGroup::Unknown;
    const auto slot = static_cast<std::size_t>(g);
    auto& stats = out.groups[slot];
    ++stats.count;
    sums[slot] += d.score;
    const auto bin = std::min<std::int64_t>(
        static_cast<std::int64_t>(std::floor(d.score * bins)), bins - 1);
    ++stats.histogram[static_cast<std::size_t>(std::max<std::int64_t>(bin, 0))];
  }
  for (std::size_t i = 0; i < 4; ++i) {
    auto& stats = out.groups[i];
    if (stats.count > 0) {
      stats.mean = sums[i] / static_cast<double>(stats.count);
    } else if (stats.group != FrequencyGroup::Unknown) {
      out.warnings.push_back(std::string("EmptyGroup: no detections for ") +
                             group_name(stats.group) + " categories");
    }
  }
  const auto& frequent = out.groups[static_cast<std::size_t>(FrequencyGroup::Frequent)];
  if (frequent.mean && *frequent.mean > 0.0) {
    for (auto& stats : out.groups) {
      if (stats.mean) stats.normalized_mean = *stats.mean / *frequent.mean;
    }
  }
  return out;
}

const char* axis_label(SweepAxis axis) {
  return axis == SweepAxis::DetsPerImage ? "dets/im" : "dets/class";
}

SweepResult sweep(const Dataset& dataset, const DetectionSet& dets, SweepAxis axis,
                  std::span<const std::optional<std::int64_t>> values,
                  const EvalConfig& config) {
  config.validate();
  if (values.empty()) throw ConfigError("sweep needs at least one value");
  const DetectionSet filtered = federated_filter(dataset, dets);
  const MatchPlan plan(dataset, filtered.detections, config.threads);

  SweepResult result;
  result.axis = axis;
  for (const auto& value : values) {
    EvalConfig row_config = config;
    if (axis == SweepAxis::DetsPerImage) {
      row_config.ranking_policy.max_dets_per_image = value;
    } else {
      row_config.ranking_policy.max_dets_per_class = value;
    }
    row_config.validate();
    const auto start = Clock::now();
    const KeepMask mask =
        policy_mask(filtered.detections, row_config.ranking_policy, config.threads);
    EvalReport report = evaluate_masked(dataset, plan, mask, row_config, nullptr);
    report.input_detections = static_cast<std::int64_t>(dets.size());
    RuntimeStats runtime;
    runtime.total_ms = elapsed_ms(start);
    report.runtime = runtime;
    result.rows.push_back({value, std::move(report)});
  }
  return result;
}

std::pair<Dataset, DetectionSet> restrict_to_groups(const Dataset& dataset,
                                                    const DetectionSet& dets,
                                                    const std::set<FrequencyGroup>& groups,
                                                    const FrequencyThresholds& thresholds) {
  std::vector<Category> categories;
  std::set<CategoryId> kept;
  for (const auto& c : dataset.categories()) {
    if (groups.count(frequency_group(c, thresholds))) {
      categories.push_back(c);
      kept.insert(c.id);
    }
  }
  auto keep_ids = [&](const std::vector<CategoryId>& ids) {
    std::vector<CategoryId> out;
    for (auto id : ids) {
      if (kept.count(id)) out.push_back(id);
    }
    return out;
  };
  std::vector<ImageRecord> images;
  images.reserve(dataset.images().size());
  for (const auto& image : dataset.images()) {
    ImageRecord copy = image;
    copy.positive_category_ids = keep_ids(image.positive_category_ids);
    copy.negative_category_ids = keep_ids(image.negative_category_ids);
    copy.not_exhaustive_category_ids = keep_ids(image.not_exhaustive_category_ids);
    images.push_back(std::move(copy));
  }
  std::vector<GroundTruthInstance> instances;
  for (const auto& inst : dataset.instances()) {
    if (kept.count(inst.category_id)) instances.push_back(inst);
  }
  DetectionSet subset;
  subset.clamped_scores = dets.clamped_scores;
  for (const auto& d : dets.detections) {
    if (kept.count(d.category_id)) subset.detections.push_back(d);
  }
  return {Dataset(std::move(categories), std::move(images), std::move(instances)),
          std::move(subset)};
}

EvalReport subset_evaluate(const Dataset& dataset, const DetectionSet& dets,
                           const std::set<FrequencyGroup>& groups, const EvalConfig& config) {
  if (groups.empty()) throw ConfigError("subset evaluation needs at least one group");
  auto [sub_dataset, sub_dets] = restrict_to_groups(dataset, dets, groups, config.frequency_thresholds);
  EvalReport report = evaluate(sub_dataset, sub_dets, config);
  std::string label = "subset ";
  for (auto g : groups) label += group_letter(g);
  report.label = label;
  return report;
}

}  // namespace lvap
