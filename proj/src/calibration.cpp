#include "lvap/calibration.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <fstream>
#include <limits>
#include <numeric>
#include <sstream>

#include "lvap/io.hpp"
#include "lvap/matching.hpp"
#include "lvap/parallel.hpp"
#include "lvap/ranking.hpp"

namespace lvap {

namespace {

double sigmoid(double z) {
  if (z >= 0) return 1.0 / (1.0 + std::exp(-z));
  const double e = std::exp(z);
  return e / (1.0 + e);
}

// log(1 + exp(z)) without overflow.
double softplus(double z) {
  if (z > 0) return z + std::log1p(std::exp(-z));
  return std::log1p(std::exp(z));
}

double logit(double p) { return std::log(p / (1.0 - p)); }

double clamp01(double v) {
  if (std::isnan(v)) return 0.0;
  return std::clamp(v, 0.0, 1.0);
}

struct Counts {
  std::int64_t n = 0;
  std::int64_t pos = 0;
};

Counts count(std::span<const LabeledScore> samples) {
  Counts c;
  c.n = static_cast<std::int64_t>(samples.size());
  for (const auto& s : samples) c.pos += s.label != 0 ? 1 : 0;
  return c;
}

double smoothed_rate(const Counts& c) {
  return (static_cast<double>(c.pos) + 1.0) / (static_cast<double>(c.n) + 2.0);
}

// Returns a reason when the sample cannot support a fit.
std::string insufficiency(const Counts& c, const FitOptions& options, bool need_both_labels) {
  if (c.n < std::max<std::int64_t>(options.min_samples, 1)) {
    return "InsufficientData: " + std::to_string(c.n) + " < " +
           std::to_string(std::max<std::int64_t>(options.min_samples, 1)) + " samples";
  }
  if (need_both_labels && c.pos == 0) return "Separable: no positive samples";
  if (need_both_labels && c.pos == c.n) return "Separable: no negative samples";
  return {};
}

FitResult finish(Calibrator calibrator, const Counts& c, std::string fallback) {
  FitResult r;
  r.info.n_samples = c.n;
  r.info.n_positive = c.pos;
  r.info.fallback = std::move(fallback);
  r.info.monotone = is_monotone(calibrator);
  r.calibrator = std::move(calibrator);
  return r;
}

constexpr std::size_t kMaxFeatures = 3;
using Row = std::array<double, kMaxFeatures>;

// Ridge-regularized logistic regression by damped Newton steps. Only the
// first `k` entries of each row are used.
class LogisticProblem {
 public:
  LogisticProblem(std::vector<Row> rows, std::vector<int> labels, std::size_t k)
      : rows_(std::move(rows)), labels_(std::move(labels)), k_(k) {}

  double objective(const Row& w) const {
    double total = 0.0;
    for (std::size_t i = 0; i < rows_.size(); ++i) {
      const double z = dot(rows_[i], w);
      total += labels_[i] != 0 ? softplus(-z) : softplus(z);
    }
    for (std::size_t j = 0; j < k_; ++j) total += 0.5 * kNewtonRidge * w[j] * w[j];
    return total;
  }

  Row solve() const {
    Row w{};
    double current = objective(w);
    for (int iter = 0; iter < 200; ++iter) {
      Row grad{};
      std::array<Row, kMaxFeatures> hess{};
      for (std::size_t i = 0; i < rows_.size(); ++i) {
        const double p = sigmoid(dot(rows_[i], w));
        const double r = p - (labels_[i] != 0 ? 1.0 : 0.0);
        const double v = p * (1.0 - p);
        for (std::size_t a = 0; a < k_; ++a) {
          grad[a] += r * rows_[i][a];
          for (std::size_t b = 0; b < k_; ++b) hess[a][b] += v * rows_[i][a] * rows_[i][b];
        }
      }
      for (std::size_t a = 0; a < k_; ++a) {
        grad[a] += kNewtonRidge * w[a];
        hess[a][a] += kNewtonRidge;
      }
      const Row step = solve_linear(hess, grad);
      double t = 1.0;
      Row next{};
      double value = current;
      bool improved = false;
      for (int halving = 0; halving < 60; ++halving) {
        for (std::size_t a = 0; a < k_; ++a) next[a] = w[a] - t * step[a];
        value = objective(next);
        if (value <= current) {
          improved = true;
          break;
        }
        t *= 0.5;
      }
      if (!improved) break;
      double max_change = 0.0;
      for (std::size_t a = 0; a < k_; ++a) max_change = std::max(max_change, std::abs(next[a] - w[a]));
      w = next;
      const double decrease = current - value;
      current = value;
      if (max_change < 1e-12 || decrease <= 1e-15 * std::max(1.0, std::abs(current))) break;
    }
    return w;
  }

 private:
  double dot(const Row& x, const Row& w) const {
    double z = 0.0;
    for (std::size_t j = 0; j < k_; ++j) z += x[j] * w[j];
    return z;
  }

  // Gaussian elimination with partial pivoting; the ridge keeps H positive definite.
  Row solve_linear(std::array<Row, kMaxFeatures> h, Row g) const {
    for (std::size_t col = 0; col < k_; ++col) {
      std::size_t pivot = col;
      for (std::size_t r = col + 1; r < k_; ++r) {
        if (std::abs(h[r][col]) > std::abs(h[pivot][col])) pivot = r;
      }
      std::swap(h[col], h[pivot]);
      std::swap(g[col], g[pivot]);
      const double d = h[col][col];
      if (d == 0.0) continue;
      for (std::size_t r = col + 1; r < k_; ++r) {
        const double f = h[r][col] / d;
        for (std::size_t c = col; c < k_; ++c) h[r][c] -= f * h[col][c];
        g[r] -= f * g[col];
      }
    }
    Row x{};
    for (std::size_t i = k_; i-- > 0;) {
      double s = g[i];
      for (std::size_t c = i + 1; c < k_; ++c) s -= h[i][c] * x[c];
      x[i] = h[i][i] != 0.0 ? s / h[i][i] : 0.0;
    }
    return x;
  }

  std::vector<Row> rows_;
  std::vector<int> labels_;
  std::size_t k_;
};

std::vector<int> labels_of(std::span<const LabeledScore> samples) {
  std::vector<int> labels;
  labels.reserve(samples.size());
  for (const auto& s : samples) labels.push_back(s.label != 0 ? 1 : 0);
  return labels;
}

// Fits sigmoid(sum_j w_j x_j + c) over the selected feature columns and
// returns the coefficients in the full layout (unselected ones are 0).
std::vector<double> fit_selected(const std::vector<std::array<double, 2>>& features,
                                 const std::vector<int>& labels, const std::vector<bool>& use) {
  std::vector<std::size_t> cols;
  for (std::size_t j = 0; j < use.size(); ++j) {
    if (use[j]) cols.push_back(j);
  }
  std::vector<Row> rows(features.size());
  for (std::size_t i = 0; i < features.size(); ++i) {
    for (std::size_t c = 0; c < cols.size(); ++c) rows[i][c] = features[i][cols[c]];
    rows[i][cols.size()] = 1.0;
  }
  LogisticProblem problem(std::move(rows), labels, cols.size() + 1);
  const Row w = problem.solve();
  std::vector<double> out(use.size() + 1, 0.0);
  for (std::size_t c = 0; c < cols.size(); ++c) out[cols[c]] = w[c];
  out[use.size()] = w[cols.size()];
  return out;
}

std::vector<LabeledScore> sorted_by_score(std::span<const LabeledScore> samples) {
  std::vector<LabeledScore> sorted(samples.begin(), samples.end());
  std::stable_sort(sorted.begin(), sorted.end(),
                   [](const LabeledScore& a, const LabeledScore& b) { return a.score < b.score; });
  return sorted;
}

double histogram_value(const HistogramCalibrator& h, double score) {
  if (h.rates.empty()) return score;
  const auto it = std::upper_bound(h.edges.begin(), h.edges.end(), score);
  const auto bin = static_cast<std::size_t>(it - h.edges.begin());
  return h.rates[std::min(bin, h.rates.size() - 1)];
}

double beta_clamp(double s) { return std::clamp(s, kBetaEpsilon, 1.0 - kBetaEpsilon); }

// Integer cube root: largest m with m^3 <= v.
std::int64_t icbrt(std::int64_t v) {
  if (v <= 0) return 0;
  auto m = static_cast<std::int64_t>(std::cbrt(static_cast<double>(v)));
  while (m > 0 && m * m * m > v) --m;
  while ((m + 1) * (m + 1) * (m + 1) <= v) ++m;
  return m;
}

}  // namespace

CalibrationMethod parse_calibration_method(std::string_view text) {
  if (text == "platt") return CalibrationMethod::Platt;
  if (text == "isotonic") return CalibrationMethod::Isotonic;
  if (text == "histbin" || text == "histogram") return CalibrationMethod::HistogramBinning;
  if (text == "beta") return CalibrationMethod::Beta;
  if (text == "bbq") return CalibrationMethod::Bbq;
  throw ConfigError("unknown calibration method '" + std::string(text) +
                    "' (expected platt, isotonic, histbin, beta or bbq)");
}

const char* method_name(CalibrationMethod method) {
  switch (method) {
    case CalibrationMethod::Platt: return "platt";
    case CalibrationMethod::Isotonic: return "isotonic";
    case CalibrationMethod::HistogramBinning: return "histbin";
    case CalibrationMethod::Beta: return "beta";
    case CalibrationMethod::Bbq: return "bbq";
  }
  return "?";
}

double calibrate(const Calibrator& calibrator, double score) {
  const double s = clamp01(score);
  const double out = std::visit(
      [s](const auto& c) -> double {
        using T = std::decay_t<decltype(c)>;
        if constexpr (std::is_same_v<T, IdentityCalibrator>) {
          return s;
        } else if constexpr (std::is_same_v<T, PlattCalibrator>) {
          return sigmoid(c.a * s + c.b);
        } else if constexpr (std::is_same_v<T, IsotonicCalibrator>) {
          if (c.scores.empty()) return s;
          if (s <= c.scores.front()) return c.values.front();
          if (s >= c.scores.back()) return c.values.back();
          const auto it = std::upper_bound(c.scores.begin(), c.scores.end(), s);
          const auto hi = static_cast<std::size_t>(it - c.scores.begin());
          const std::size_t lo = hi - 1;
          const double x0 = c.scores[lo];
          const double x1 = c.scores[hi];
          if (x1 == x0) return c.values[hi];
          const double t = (s - x0) / (x1 - x0);
          return c.values[lo] + t * (c.values[hi] - c.values[lo]);
        } else if constexpr (std::is_same_v<T, HistogramCalibrator>) {
          return histogram_value(c, s);
        } else if constexpr (std::is_same_v<T, BetaCalibrator>) {
          const double x = beta_clamp(s);
          return sigmoid(c.a * std::log(x) - c.b * std::log(1.0 - x) + c.c);
        } else {
          if (c.components.empty()) return s;
          double total = 0.0;
          for (std::size_t i = 0; i < c.components.size(); ++i) {
            total += c.weights[i] * histogram_value(c.components[i], s);
          }
          return total;
        }
      },
      calibrator);
  return clamp01(out);
}

bool is_monotone(const Calibrator& calibrator) {
  return std::visit(
      [](const auto& c) -> bool {
        using T = std::decay_t<decltype(c)>;
        if constexpr (std::is_same_v<T, IdentityCalibrator>) {
          return true;
        } else if constexpr (std::is_same_v<T, PlattCalibrator>) {
          return c.a >= 0.0;
        } else if constexpr (std::is_same_v<T, IsotonicCalibrator>) {
          return std::is_sorted(c.values.begin(), c.values.end());
        } else if constexpr (std::is_same_v<T, HistogramCalibrator>) {
          return std::is_sorted(c.rates.begin(), c.rates.end());
        } else if constexpr (std::is_same_v<T, BetaCalibrator>) {
          return c.a >= 0.0 && c.b >= 0.0;
        } else {
          // A weighted sum of non-decreasing maps is non-decreasing; otherwise
          // check the combined map at every cut point.
          std::vector<double> cuts{0.0, 1.0};
          for (const auto& h : c.components) cuts.insert(cuts.end(), h.edges.begin(), h.edges.end());
          std::sort(cuts.begin(), cuts.end());
          double prev = -1.0;
          for (double x : cuts) {
            double v = 0.0;
            for (std::size_t i = 0; i < c.components.size(); ++i) {
              v += c.weights[i] * histogram_value(c.components[i], x);
            }
            if (v < prev) return false;
            prev = v;
          }
          return true;
        }
      },
      calibrator);
}

const char* calibrator_name(const Calibrator& calibrator) {
  switch (calibrator.index()) {
    case 0: return "identity";
    case 1: return "platt";
    case 2: return "isotonic";
    case 3: return "histbin";
    case 4: return "beta";
    case 5: return "bbq";
  }
  return "?";
}

FitResult fit_platt(std::span<const LabeledScore> samples, const FitOptions& options) {
  const Counts c = count(samples);
  if (c.n < std::max<std::int64_t>(options.min_samples, 1)) {
    return finish(IdentityCalibrator{}, c, insufficiency(c, options, false));
  }
  if (c.pos == 0 || c.pos == c.n) {
    return finish(PlattCalibrator{0.0, logit(smoothed_rate(c))}, c,
                  insufficiency(c, options, true));
  }
  std::vector<std::array<double, 2>> features(samples.size());
  for (std::size_t i = 0; i < samples.size(); ++i) features[i] = {clamp01(samples[i].score), 0.0};
  const auto labels = labels_of(samples);
  auto w = fit_selected(features, labels, {true});
  if (w[0] < 0.0) w = fit_selected(features, labels, {false});
  return finish(PlattCalibrator{w[0], w[1]}, c, {});
}

FitResult fit_beta(std::span<const LabeledScore> samples, const FitOptions& options) {
  const Counts c = count(samples);
  if (c.n < std::max<std::int64_t>(options.min_samples, 1)) {
    return finish(IdentityCalibrator{}, c, insufficiency(c, options, false));
  }
  if (c.pos == 0 || c.pos == c.n) {
    return finish(BetaCalibrator{0.0, 0.0, logit(smoothed_rate(c))}, c,
                  insufficiency(c, options, true));
  }
  std::vector<std::array<double, 2>> features(samples.size());
  for (std::size_t i = 0; i < samples.size(); ++i) {
    const double x = beta_clamp(clamp01(samples[i].score));
    features[i] = {std::log(x), -std::log(1.0 - x)};
  }
  const auto labels = labels_of(samples);
  std::vector<bool> use{true, true};
  auto w = fit_selected(features, labels, use);
  // Drop negative shape coefficients one refit at a time.
  while (true) {
    bool changed = false;
    for (std::size_t j = 0; j < 2; ++j) {
      if (use[j] && w[j] < 0.0) {
        use[j] = false;
        changed = true;
      }
    }
    if (!changed) break;
    w = fit_selected(features, labels, use);
  }
  return finish(BetaCalibrator{w[0], w[1], w[2]}, c, {});
}

FitResult fit_isotonic(std::span<const LabeledScore> samples, const FitOptions& options) {
  const Counts c = count(samples);
  if (const auto reason = insufficiency(c, options, false); !reason.empty()) {
    return finish(IdentityCalibrator{}, c, reason);
  }
  const auto sorted = sorted_by_score(samples);

  struct Block {
    double sum = 0.0;
    double weight = 0.0;
    double lo = 0.0;
    double hi = 0.0;
  };
  std::vector<Block> blocks;
  for (std::size_t i = 0; i < sorted.size();) {
    // Equal scores must share one value, so they enter as a single block.
    Block b{0.0, 0.0, sorted[i].score, sorted[i].score};
    std::size_t j = i;
    while (j < sorted.size() && sorted[j].score == sorted[i].score) {
      b.sum += sorted[j].label != 0 ? 1.0 : 0.0;
      b.weight += 1.0;
      ++j;
    }
    i = j;
    blocks.push_back(b);
    while (blocks.size() > 1) {
      Block& last = blocks.back();
      Block& prev = blocks[blocks.size() - 2];
      if (prev.sum / prev.weight <= last.sum / last.weight) break;
      prev.sum += last.sum;
      prev.weight += last.weight;
      prev.hi = last.hi;
      blocks.pop_back();
    }
  }

  IsotonicCalibrator iso;
  for (const auto& b : blocks) {
    const double v = b.sum / b.weight;
    iso.scores.push_back(b.lo);
    iso.values.push_back(v);
    if (b.hi != b.lo) {
      iso.scores.push_back(b.hi);
      iso.values.push_back(v);
    }
  }
  return finish(std::move(iso), c, {});
}

HistogramCalibrator fit_histogram_bins(std::span<const LabeledScore> samples, std::int64_t bins) {
  HistogramCalibrator h;
  const auto sorted = sorted_by_score(samples);
  const auto n = static_cast<std::int64_t>(sorted.size());
  if (n == 0) return h;
  bins = std::clamp<std::int64_t>(bins, 1, n);
  for (std::int64_t b = 0; b < bins; ++b) {
    const std::int64_t begin = b * n / bins;
    const std::int64_t end = (b + 1) * n / bins;
    double pos = 0.0;
    for (std::int64_t i = begin; i < end; ++i) pos += sorted[i].label != 0 ? 1.0 : 0.0;
    h.rates.push_back((pos + 1.0) / (static_cast<double>(end - begin) + 2.0));
    if (b > 0) h.edges.push_back(0.5 * (sorted[begin - 1].score + sorted[begin].score));
  }
  return h;
}

FitResult fit_histogram(std::span<const LabeledScore> samples, const FitOptions& options) {
  const Counts c = count(samples);
  if (const auto reason = insufficiency(c, options, false); !reason.empty()) {
    return finish(IdentityCalibrator{}, c, reason);
  }
  const std::int64_t bins = std::max<std::int64_t>(1, std::min<std::int64_t>(15, c.n / 10));
  return finish(fit_histogram_bins(samples, bins), c, {});
}

std::pair<std::int64_t, std::int64_t> bbq_bin_range(std::int64_t n) {
  if (n <= 0) return {1, 1};
  // Largest m with 8 m^3 <= n, i.e. floor(cbrt(n) / 2).
  const std::int64_t lo = std::max<std::int64_t>(1, icbrt(n / 8));
  // Smallest m with m^3 >= 8 n, i.e. ceil(2 cbrt(n)).
  std::int64_t hi = icbrt(8 * n);
  if (hi * hi * hi < 8 * n) ++hi;
  hi = std::min(hi, n);
  return {std::min(lo, hi), hi};
}

FitResult fit_bbq(std::span<const LabeledScore> samples, const FitOptions& options) {
  const Counts c = count(samples);
  if (const auto reason = insufficiency(c, options, false); !reason.empty()) {
    return finish(IdentityCalibrator{}, c, reason);
  }
  const auto [lo, hi] = bbq_bin_range(c.n);
  BbqCalibrator bbq;
  std::vector<double> aic;
  for (std::int64_t b = lo; b <= hi; ++b) {
    HistogramCalibrator h = fit_histogram_bins(samples, b);
    double log_lik = 0.0;
    for (const auto& s : samples) {
      const double p = histogram_value(h, clamp01(s.score));
      log_lik += s.label != 0 ? std::log(p) : std::log1p(-p);
    }
    aic.push_back(2.0 * static_cast<double>(h.rates.size()) - 2.0 * log_lik);
    bbq.components.push_back(std::move(h));
  }
  const double best = *std::min_element(aic.begin(), aic.end());
  double total = 0.0;
  for (double a : aic) {
    bbq.weights.push_back(std::exp(-0.5 * (a - best)));
    total += bbq.weights.back();
  }
  for (double& w : bbq.weights) w /= total;
  return finish(std::move(bbq), c, {});
}

FitResult fit_calibrator(CalibrationMethod method, std::span<const LabeledScore> samples,
                         const FitOptions& options) {
  switch (method) {
    case CalibrationMethod::Platt: return fit_platt(samples, options);
    case CalibrationMethod::Isotonic: return fit_isotonic(samples, options);
    case CalibrationMethod::HistogramBinning: return fit_histogram(samples, options);
    case CalibrationMethod::Beta: return fit_beta(samples, options);
    case CalibrationMethod::Bbq: return fit_bbq(samples, options);
  }
  throw ConfigError("unknown calibration method");
}

std::vector<LabeledScore> label_for_calibration(const Dataset& dataset, const DetectionSet& dets,
                                                int threads) {
  const DetectionSet filtered = federated_filter(dataset, dets);
  const std::array<double, 1> thresholds{0.5};
  const MatchSet matches = match_dataset(dataset, filtered, thresholds, threads);
  std::vector<LabeledScore> out;
  for (const auto& group : matches.groups()) {
    for (const auto& r : group.records) {
      if (r.outcome == Outcome::Ignored) continue;
      out.push_back({r.score, r.outcome == Outcome::TruePositive ? 1 : 0, r.category_id});
    }
  }
  return out;
}

CalibrationModel fit_per_class(const Dataset& dataset, std::span<const LabeledScore> labels,
                               CalibrationMethod method, const FitOptions& options, int threads) {
  std::vector<CategoryId> ids;
  for (const auto& cat : dataset.categories()) ids.push_back(cat.id);
  std::sort(ids.begin(), ids.end());
  std::vector<std::vector<LabeledScore>> buckets(ids.size());
  for (const auto& l : labels) {
    const auto it = std::lower_bound(ids.begin(), ids.end(), l.category_id);
    if (it != ids.end() && *it == l.category_id) {
      buckets[static_cast<std::size_t>(it - ids.begin())].push_back(l);
    }
  }
  std::vector<FitResult> fits(ids.size());
  parallel_for(ids.size(), threads,
               [&](std::size_t i) { fits[i] = fit_calibrator(method, buckets[i], options); });
  CalibrationModel model;
  model.method = method;
  model.min_samples = options.min_samples;
  for (std::size_t i = 0; i < ids.size(); ++i) model.per_category.emplace(ids[i], std::move(fits[i]));
  return model;
}

CalibrationModel fit_per_class(const Dataset& dataset, const DetectionSet& dets,
                               CalibrationMethod method, const FitOptions& options, int threads) {
  const auto labels = label_for_calibration(dataset, dets, threads);
  return fit_per_class(dataset, labels, method, options, threads);
}

DetectionSet apply_calibration(const DetectionSet& dets, const CalibrationModel& model,
                               std::int64_t* unknown) {
  DetectionSet out = dets;
  std::int64_t missing = 0;
  for (auto& d : out.detections) {
    const auto it = model.per_category.find(d.category_id);
    if (it == model.per_category.end()) {
      ++missing;
      d.score = clamp01(d.score);
      continue;
    }
    d.score = calibrate(it->second.calibrator, d.score);
  }
  if (unknown != nullptr) *unknown = missing;
  return out;
}

double expected_calibration_error(std::span<const LabeledScore> samples, int n_bins) {
  if (n_bins < 1) throw ConfigError("ECE needs at least one bin");
  if (samples.empty()) return 0.0;
  std::vector<double> score_sum(static_cast<std::size_t>(n_bins), 0.0);
  std::vector<double> label_sum(static_cast<std::size_t>(n_bins), 0.0);
  std::vector<double> counts(static_cast<std::size_t>(n_bins), 0.0);
  for (const auto& s : samples) {
    const double x = clamp01(s.score);
    const auto idx = std::min(static_cast<int>(std::floor(x * n_bins)), n_bins - 1);
    score_sum[idx] += x;
    label_sum[idx] += s.label != 0 ? 1.0 : 0.0;
    counts[idx] += 1.0;
  }
  const auto n = static_cast<double>(samples.size());
  double ece = 0.0;
  for (std::size_t b = 0; b < counts.size(); ++b) {
    if (counts[b] == 0.0) continue;
    ece += counts[b] / n * std::abs(label_sum[b] / counts[b] - score_sum[b] / counts[b]);
  }
  return ece;
}

namespace {

using nlohmann::json;

json histogram_to_json(const HistogramCalibrator& h) {
  return json{{"edges", h.edges}, {"rates", h.rates}};
}

HistogramCalibrator histogram_from_json(const json& j) {
  HistogramCalibrator h;
  h.edges = j.at("edges").get<std::vector<double>>();
  h.rates = j.at("rates").get<std::vector<double>>();
  if (h.rates.empty() || h.edges.size() + 1 != h.rates.size()) {
    throw ConfigError("histogram calibrator needs one more rate than edges");
  }
  return h;
}

json calibrator_params(const Calibrator& calibrator) {
  return std::visit(
      [](const auto& c) -> json {
        using T = std::decay_t<decltype(c)>;
        if constexpr (std::is_same_v<T, IdentityCalibrator>) {
          return json::object();
        } else if constexpr (std::is_same_v<T, PlattCalibrator>) {
          return json{{"A", c.a}, {"B", c.b}};
        } else if constexpr (std::is_same_v<T, IsotonicCalibrator>) {
          return json{{"scores", c.scores}, {"values", c.values}};
        } else if constexpr (std::is_same_v<T, HistogramCalibrator>) {
          return histogram_to_json(c);
        } else if constexpr (std::is_same_v<T, BetaCalibrator>) {
          return json{{"a", c.a}, {"b", c.b}, {"c", c.c}};
        } else {
          json comps = json::array();
          for (const auto& h : c.components) comps.push_back(histogram_to_json(h));
          return json{{"components", comps}, {"weights", c.weights}};
        }
      },
      calibrator);
}

Calibrator calibrator_from_json(const std::string& name, const json& p) {
  if (name == "identity") return IdentityCalibrator{};
  if (name == "platt") return PlattCalibrator{p.at("A").get<double>(), p.at("B").get<double>()};
  if (name == "isotonic") {
    IsotonicCalibrator iso;
    iso.scores = p.at("scores").get<std::vector<double>>();
    iso.values = p.at("values").get<std::vector<double>>();
    if (iso.scores.size() != iso.values.size() ||
        !std::is_sorted(iso.scores.begin(), iso.scores.end())) {
      throw ConfigError("isotonic calibrator needs sorted scores paired with values");
    }
    return iso;
  }
  if (name == "histbin") return histogram_from_json(p);
  if (name == "beta") {
    return BetaCalibrator{p.at("a").get<double>(), p.at("b").get<double>(),
                          p.at("c").get<double>()};
  }
  if (name == "bbq") {
    BbqCalibrator bbq;
    for (const auto& h : p.at("components")) bbq.components.push_back(histogram_from_json(h));
    bbq.weights = p.at("weights").get<std::vector<double>>();
    if (bbq.weights.size() != bbq.components.size()) {
      throw ConfigError("bbq calibrator needs one weight per component");
    }
    return bbq;
  }
  throw ConfigError("unknown calibrator type '" + name + "'");
}

}  // namespace

nlohmann::json model_to_json(const CalibrationModel& model) {
  json categories = json::array();
  for (const auto& [id, fit] : model.per_category) {
    categories.push_back({
        {"category_id", id},
        {"method", calibrator_name(fit.calibrator)},
        {"parameters", calibrator_params(fit.calibrator)},
        {"fit_metadata",
         {{"n_samples", fit.info.n_samples},
          {"n_positive", fit.info.n_positive},
          {"fallback", fit.info.fallback.empty() ? json(nullptr) : json(fit.info.fallback)},
          {"monotone", fit.info.monotone}}},
    });
  }
  return json{{"method", method_name(model.method)},
              {"min_samples", model.min_samples},
              {"categories", categories}};
}

CalibrationModel model_from_json(const nlohmann::json& j) {
  try {
    CalibrationModel model;
    model.method = parse_calibration_method(j.at("method").get<std::string>());
    model.min_samples = j.value("min_samples", std::int64_t{5});
    for (const auto& entry : j.at("categories")) {
      FitResult fit;
      fit.calibrator = calibrator_from_json(entry.at("method").get<std::string>(),
                                            entry.at("parameters"));
      const auto& meta = entry.at("fit_metadata");
      fit.info.n_samples = meta.at("n_samples").get<std::int64_t>();
      fit.info.n_positive = meta.at("n_positive").get<std::int64_t>();
      if (!meta.at("fallback").is_null()) fit.info.fallback = meta.at("fallback").get<std::string>();
      fit.info.monotone = meta.at("monotone").get<bool>();
      const auto id = entry.at("category_id").get<CategoryId>();
      if (!model.per_category.emplace(id, std::move(fit)).second) {
        throw ConfigError("duplicate category " + std::to_string(id) + " in calibration model");
      }
    }
    return model;
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("invalid calibration model: ") + e.what());
  }
}

void save_model(const CalibrationModel& model, const std::filesystem::path& path) {
  write_file_atomically(path, model_to_json(model).dump(2) + "\n");
}

CalibrationModel load_model(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw LoadError(LoadError::Kind::IoFailure, "cannot open " + path.string());
  json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    throw LoadError(LoadError::Kind::MalformedFile, path.string() + ": " + e.what());
  }
  return model_from_json(j);
}

}  // namespace lvap
