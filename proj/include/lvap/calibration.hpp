#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <span>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

#include "json.hpp"
#include "lvap/core.hpp"

namespace lvap {

// One matched detection of the calibration corpus: label 1 for a true
// positive at IoU 0.5, 0 for a false positive. Ignored matches never appear.
struct LabeledScore {
  double score = 0.0;
  int label = 0;
  CategoryId category_id = 0;

  friend bool operator==(const LabeledScore&, const LabeledScore&) = default;
};

enum class CalibrationMethod { Platt, Isotonic, HistogramBinning, Beta, Bbq };

CalibrationMethod parse_calibration_method(std::string_view text);
const char* method_name(CalibrationMethod method);  // "platt", "isotonic", ...

struct IdentityCalibrator {
  friend bool operator==(const IdentityCalibrator&, const IdentityCalibrator&) = default;
};

// sigmoid(a * s + b), a >= 0.
struct PlattCalibrator {
  double a = 0.0;
  double b = 0.0;
  friend bool operator==(const PlattCalibrator&, const PlattCalibrator&) = default;
};

// Piecewise linear through (score, value) breakpoints sorted by score; flat
// outside the first and last breakpoint. Each pooled block contributes its
// lowest and highest training score, so training points map to block values.
struct IsotonicCalibrator {
  std::vector<double> scores;
  std::vector<double> values;
  friend bool operator==(const IsotonicCalibrator&, const IsotonicCalibrator&) = default;
};

// Bin i covers [edges[i-1], edges[i]); `edges` holds the B-1 interior cuts.
struct HistogramCalibrator {
  std::vector<double> edges;
  std::vector<double> rates;
  friend bool operator==(const HistogramCalibrator&, const HistogramCalibrator&) = default;
};

// sigmoid(a ln s - b ln(1 - s) + c) with s clamped to [1e-6, 1 - 1e-6].
struct BetaCalibrator {
  double a = 0.0;
  double b = 0.0;
  double c = 0.0;
  friend bool operator==(const BetaCalibrator&, const BetaCalibrator&) = default;
};

// Weighted average of histogram binnings of different resolutions.
struct BbqCalibrator {
  std::vector<HistogramCalibrator> components;
  std::vector<double> weights;
  friend bool operator==(const BbqCalibrator&, const BbqCalibrator&) = default;
};

using Calibrator = std::variant<IdentityCalibrator, PlattCalibrator, IsotonicCalibrator,
                                HistogramCalibrator, BetaCalibrator, BbqCalibrator>;

double calibrate(const Calibrator& calibrator, double score);
// Exact check on the stored parameters (binning maps may decrease).
bool is_monotone(const Calibrator& calibrator);
const char* calibrator_name(const Calibrator& calibrator);

struct FitInfo {
  std::int64_t n_samples = 0;
  std::int64_t n_positive = 0;
  std::string fallback;  // empty when the requested method was fit
  bool monotone = true;

  friend bool operator==(const FitInfo&, const FitInfo&) = default;
};

struct FitResult {
  Calibrator calibrator;
  FitInfo info;

  friend bool operator==(const FitResult&, const FitResult&) = default;
};

struct FitOptions {
  std::int64_t min_samples = 5;
};

inline constexpr double kBetaEpsilon = 1e-6;
inline constexpr double kNewtonRidge = 1e-6;

FitResult fit_platt(std::span<const LabeledScore> samples, const FitOptions& options = {});
FitResult fit_isotonic(std::span<const LabeledScore> samples, const FitOptions& options = {});
FitResult fit_histogram(std::span<const LabeledScore> samples, const FitOptions& options = {});
FitResult fit_beta(std::span<const LabeledScore> samples, const FitOptions& options = {});
FitResult fit_bbq(std::span<const LabeledScore> samples, const FitOptions& options = {});
FitResult fit_calibrator(CalibrationMethod method, std::span<const LabeledScore> samples,
                         const FitOptions& options = {});

// Equal-frequency binning with a fixed bin count (clamped to [1, n]).
HistogramCalibrator fit_histogram_bins(std::span<const LabeledScore> samples, std::int64_t bins);
// Inclusive candidate bin-count range for BBQ on n samples.
std::pair<std::int64_t, std::int64_t> bbq_bin_range(std::int64_t n);

struct CalibrationModel {
  CalibrationMethod method = CalibrationMethod::Platt;
  std::int64_t min_samples = 5;
  std::map<CategoryId, FitResult> per_category;

  friend bool operator==(const CalibrationModel&, const CalibrationModel&) = default;
};

// Matches at IoU 0.5 with no ranking limits (federated filter applied).
std::vector<LabeledScore> label_for_calibration(const Dataset& dataset, const DetectionSet& dets,
                                                int threads = 1);

CalibrationModel fit_per_class(const Dataset& dataset, const DetectionSet& dets,
                               CalibrationMethod method, const FitOptions& options = {},
                               int threads = 1);
CalibrationModel fit_per_class(const Dataset& dataset, std::span<const LabeledScore> labels,
                               CalibrationMethod method, const FitOptions& options = {},
                               int threads = 1);

// Replaces scores; ids, boxes and order are untouched. Detections whose
// category has no calibrator pass through and are counted in `unknown`.
DetectionSet apply_calibration(const DetectionSet& dets, const CalibrationModel& model,
                               std::int64_t* unknown = nullptr);

// Equal-width bins over [0, 1]: sum over bins of |bin|/n * |accuracy - mean score|.
double expected_calibration_error(std::span<const LabeledScore> samples, int n_bins = 15);

nlohmann::json model_to_json(const CalibrationModel& model);
CalibrationModel model_from_json(const nlohmann::json& j);
void save_model(const CalibrationModel& model, const std::filesystem::path& path);
CalibrationModel load_model(const std::filesystem::path& path);

}  // namespace lvap
