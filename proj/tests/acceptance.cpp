// Acceptance checks, one line per criterion. Arguments select criteria by
// number (default: all).

#include <sys/resource.h>
#include <sys/wait.h>
#include <unistd.h>

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <map>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include "json.hpp"
#include "lvap/calibration.hpp"
#include "lvap/cli.hpp"
#include "lvap/io.hpp"
#include "lvap/matching.hpp"
#include "lvap/metrics.hpp"
#include "lvap/toy.hpp"
#include "oracles.hpp"
#include "synth.hpp"

using namespace lvap;
namespace fs = std::filesystem;
using Clock = std::chrono::steady_clock;

namespace {

struct Verdict {
  bool pass = false;
  std::string detail;
};

double seconds_since(Clock::time_point start) {
  return std::chrono::duration<double>(Clock::now() - start).count();
}

std::string fmt(const char* pattern, auto... args) {
  char buf[512];
  std::snprintf(buf, sizeof(buf), pattern, args...);
  return buf;
}

struct TempDir {
  fs::path path;
  explicit TempDir(const std::string& tag) {
    path = fs::temp_directory_path() / ("lvap_accept_" + tag + "_" + std::to_string(::getpid()));
    fs::remove_all(path);
    fs::create_directories(path);
  }
  ~TempDir() { fs::remove_all(path); }
  std::string operator/(const std::string& name) const { return (path / name).string(); }
};

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), {}};
}

int cli(std::vector<std::string> args, std::string* out = nullptr) {
  std::ostringstream o, e;
  const int code = run_cli(args, o, e);
  if (out) *out = o.str();
  if (code != 0) std::fprintf(stderr, "  lvap exited %d: %s", code, e.str().c_str());
  return code;
}

// --- 1 ---------------------------------------------------------------------

Verdict toy_golden() {
  const auto start = Clock::now();
  const auto result = run_toy();
  const double elapsed = seconds_since(start);
  const auto& r = result.reports;
  auto ap = [](const EvalReport& report) { return report.ap.all.value_or(std::nan("")); };
  auto class_ap = [](const EvalReport& report, CategoryId id) {
    for (const auto& c : report.classes) {
      if (c.category_id == id) return c.ap.value_or(std::nan(""));
    }
    return std::nan("");
  };
  // Scenario probabilities of the toy: B1 is right 80% of the time.
  const double p1 = 0.8, p2 = 0.2;
  const std::vector<std::pair<double, double>> pairs = {
      {ap(r[0][0]), 0.5},
      {ap(r[1][0]), 0.75},
      {ap(r[0][1]), 0.5},
      {ap(r[1][1]), 0.25},
      {p1 * ap(r[0][0]) + p2 * ap(r[0][1]), 0.5},
      {p1 * ap(r[1][0]) + p2 * ap(r[1][1]), 0.65},
      {class_ap(r[0][0], 1), 1.0},
      {class_ap(r[0][1], 1), 1.0},
      {class_ap(r[1][0], 1), 0.5},
      {class_ap(r[1][1], 1), 0.5},
      {p1 * class_ap(r[1][0], 2) + p2 * class_ap(r[1][1], 2), 0.8},
  };
  double worst = 0.0;
  for (const auto& [actual, expected] : pairs) worst = std::max(worst, std::abs(actual - expected));
  const bool ok = worst <= 1e-9 && result.ok && elapsed < 1.0;
  return {ok, fmt("max |error| %.1e over %zu values, %.3f s", worst, pairs.size(), elapsed)};
}

// --- 2 ---------------------------------------------------------------------

Verdict gameability() {
  const fs::path data = LVAP_DATA_DIR;
  const auto start = Clock::now();
  std::string out;
  const int code = cli({"game", "--gt", (data / "gameable/gt.json").string(), "--dets",
                        (data / "gameable/dets.json").string(), "--dets-per-image",
                        std::to_string(synth::kGameableDetsPerImage), "--dets-per-class",
                        std::to_string(synth::kGameableDetsPerClass), "--format", "json", "--no-timestamp"},
                       &out);
  const double elapsed = seconds_since(start);
  if (code != 0) return {false, "game failed"};
  const auto j = nlohmann::json::parse(out);
  const double base = j["baseline"]["metrics"]["AP"].get<double>();
  const double gamed = j["gamed"]["metrics"]["AP"].get<double>();
  const double delta_points = 100.0 * (gamed - base);
  const auto classes = j["baseline"]["classes"].size();
  const bool ok = gamed > base && delta_points >= 0.5 && elapsed < 5.0;
  return {ok, fmt("%zu classes, AP %.1f -> %.1f (+%.1f points), %.3f s", classes, 100 * base, 100 * gamed,
                  delta_points, elapsed)};
}

// --- 3 ---------------------------------------------------------------------

Verdict monotone_invariance() {
  synth::Rng rng(3003);
  int corpora = 0, compared_classes = 0;
  double worst = 0.0;
  bool identical_curves = true;
  for (; corpora < 100; ++corpora) {
    synth::CorpusSpec spec;
    spec.images = static_cast<int>(rng.integer(4, 12));
    spec.categories = static_cast<int>(rng.integer(2, 8));
    const auto [dataset, dets] = synth::random_corpus(rng, spec);
    EvalConfig c;
    // Half at the standard class budget, half at a budget that binds.
    c.ranking_policy = corpora % 2 == 0 ? RankingPolicy::ap_fixed() : RankingPolicy{std::nullopt, rng.integer(1, 8)};
    // Per-class strictly increasing maps into (0, 1).
    std::map<CategoryId, std::function<double(double)>> transform;
    for (const auto& cat : dataset.categories()) {
      const double scale = rng.uniform(0.1, 5.0), power = rng.uniform(0.3, 4.0), shift = rng.uniform(-2, 2);
      switch (rng.integer(0, 2)) {
        case 0: transform[cat.id] = [=](double s) { return std::pow(s, power) * scale / (1.0 + scale); }; break;
        case 1: transform[cat.id] = [=](double s) { return 1.0 / (1.0 + std::exp(-(scale * s + shift))); }; break;
        default: transform[cat.id] = [=](double s) { return 0.5 * (s + s * s * s) * 0.999; }; break;
      }
    }
    DetectionSet moved = dets;
    for (auto& d : moved.detections) d.score = transform[d.category_id](d.score);

    EvalCurves before_curves, after_curves;
    const auto before = evaluate(dataset, dets, c, &before_curves);
    const auto after = evaluate(dataset, moved, c, &after_curves);
    auto diff = [&](const std::optional<double>& a, const std::optional<double>& b) {
      if (a.has_value() != b.has_value()) return 1.0;
      return a ? std::abs(*a - *b) : 0.0;
    };
    worst = std::max({worst, diff(before.ap.all, after.ap.all), diff(before.ap.rare, after.ap.rare),
                      diff(before.ap.common, after.ap.common), diff(before.ap.frequent, after.ap.frequent)});
    for (std::size_t k = 0; k < before.classes.size(); ++k) {
      worst = std::max(worst, diff(before.classes[k].ap, after.classes[k].ap));
      for (std::size_t t = 0; t < before.classes[k].ap_per_threshold.size(); ++t) {
        worst = std::max(worst, diff(before.classes[k].ap_per_threshold[t], after.classes[k].ap_per_threshold[t]));
      }
      ++compared_classes;
    }
    if (before_curves.series.size() != after_curves.series.size()) identical_curves = false;
    for (std::size_t s = 0; identical_curves && s < before_curves.series.size(); ++s) {
      const auto& a = before_curves.series[s].points;
      const auto& b = after_curves.series[s].points;
      if (a.size() != b.size()) {
        identical_curves = false;
        break;
      }
      for (std::size_t i = 0; i < a.size(); ++i) {
        worst = std::max({worst, std::abs(a[i].recall - b[i].recall), std::abs(a[i].precision - b[i].precision)});
      }
    }
  }
  const bool ok = worst <= 1e-12 && identical_curves;
  return {ok, fmt("%d corpora, %d class results, max |diff| %.1e", corpora, compared_classes, worst)};
}

// --- 4 ---------------------------------------------------------------------

Verdict matcher_oracle() {
  synth::Rng rng(4004);
  int agree = 0, total = 0, instances = 0;
  for (; instances < 1000; ++instances) {
    std::vector<Detection> d;
    std::vector<GroundTruthInstance> g;
    auto box = [&] {
      return BoundingBox{static_cast<double>(rng.integer(0, 4)), static_cast<double>(rng.integer(0, 4)),
                         static_cast<double>(rng.integer(1, 4)), static_cast<double>(rng.integer(1, 4))};
    };
    const auto n_gt = rng.integer(0, 5), n_det = rng.integer(0, 5);
    for (int i = 0; i < n_gt; ++i) g.push_back({rng.integer(0, 50) * 10 + i, 1, 1, box(), rng.chance(0.2)});
    for (int i = 0; i < n_det; ++i) {
      d.push_back({static_cast<DetectionId>(rng.integer(0, 50) * 10 + i), 1, 1, box(), rng.integer(0, 3) / 3.0});
    }
    const double threshold = rng.chance(0.5) ? 0.5 : rng.uniform(0.1, 0.95);
    const bool not_exhaustive = rng.chance(0.2);
    const auto expected = oracle::match(d, g, threshold, not_exhaustive);
    const auto records = match_group(d, g, threshold, not_exhaustive);
    total += static_cast<int>(d.size());
    if (records.size() != d.size()) continue;
    for (const auto& r : records) {
      const auto it = expected.find(r.detection_id);
      if (it != expected.end() && it->second.outcome == r.outcome && it->second.gt_id == r.gt_id) ++agree;
    }
  }
  return {agree == total, fmt("%d instances, %d/%d detections agree", instances, agree, total)};
}

// --- 5 ---------------------------------------------------------------------

Verdict pooling_identities() {
  synth::Rng rng(5005);
  double worst = 0.0;
  int single = 0, perfect = 0, perfect_ok = 0;
  for (int trial = 0; trial < 200; ++trial) {
    synth::CorpusSpec spec;
    spec.categories = 1;
    spec.images = static_cast<int>(rng.integer(1, 15));
    const auto [dataset, dets] = synth::random_corpus(rng, spec);
    EvalConfig c;
    c.include_pooled = true;
    if (trial % 2) c.interpolation = Interpolation::exact();
    const auto r = evaluate(dataset, dets, c);
    if (!r.ap.all) continue;
    ++single;
    worst = std::max(worst, std::abs(*r.pooled->ap.all - *r.ap.all));
    for (std::size_t t = 0; t < r.ap_per_threshold.size(); ++t) {
      worst = std::max(worst, std::abs(*r.pooled->ap_per_threshold[t] - *r.ap_per_threshold[t]));
    }
  }
  for (int trial = 0; trial < 200; ++trial) {
    synth::CorpusSpec spec;
    spec.categories = static_cast<int>(rng.integer(1, 10));
    spec.ignore_fraction = 0.0;
    const auto [dataset, noise] = synth::random_corpus(rng, spec);
    DetectionSet dets;
    for (const auto& inst : dataset.instances()) {
      dets.detections.push_back({static_cast<DetectionId>(dets.size()), inst.image_id, inst.category_id,
                                 inst.bbox, rng.uniform()});
    }
    EvalConfig c;
    c.include_pooled = true;
    c.ranking_policy = RankingPolicy{};
    if (trial % 2) c.interpolation = Interpolation::exact();
    const auto r = evaluate(dataset, dets, c);
    if (!r.pooled->ap.all) continue;
    ++perfect;
    if (*r.pooled->ap.all == 1.0) ++perfect_ok;
  }
  const bool ok = worst <= 1e-12 && perfect_ok == perfect && single >= 100 && perfect >= 100;
  return {ok, fmt("%d single-category corpora max |diff| %.1e; %d/%d perfect corpora at 1.0", single, worst,
                  perfect_ok, perfect)};
}

// --- 6 ---------------------------------------------------------------------

Verdict determinism() {
  TempDir tmp("determinism");
  synth::Rng rng(6006);
  int runs = 0;
  std::vector<std::string> mismatches;
  for (int corpus = 0; corpus < 20; ++corpus) {
    synth::CorpusSpec spec;
    spec.images = static_cast<int>(rng.integer(10, 40));
    spec.categories = static_cast<int>(rng.integer(3, 12));
    const auto [dataset, dets] = synth::random_corpus(rng, spec);
    const auto gt = tmp / "gt.json", dt = tmp / "dets.json";
    write_dataset(dataset, fs::path(gt));
    write_detections(dets, fs::path(dt));
    const std::string method = std::vector<std::string>{"platt", "isotonic", "histbin", "beta", "bbq"}[corpus % 5];

    // Each command writes its primary artifact to the path after --out.
    const std::vector<std::vector<std::string>> commands = {
        {"evaluate", "--gt", gt, "--dets", dt, "--pooled", "--plot-dir", tmp / "plots@"},
        {"sweep", "--gt", gt, "--dets", dt, "--axis", "dets-per-image", "--values", "1,3,none"},
        {"sweep", "--gt", gt, "--dets", dt, "--axis", "dets-per-class", "--values", "2,none", "--pooled"},
        {"game", "--gt", gt, "--dets", dt, "--dets-per-image", "3", "--dets-per-class", "4"},
        {"subset", "--gt", gt, "--dets", dt, "--groups", "r,c"},
        {"score-dist", "--gt", gt, "--dets", dt, "--svg", tmp / "scores@.svg"},
        {"calibrate", "--gt", gt, "--dets", dt, "--method", method, "--min-samples", "3"},
        {"apply", "--model", tmp / "model1.json", "--dets", dt},
        {"toy"},
    };
    for (const auto& base : commands) {
      std::vector<std::string> artifacts;
      for (const char* threads : {"1", "8"}) {
        auto args = base;
        for (auto& a : args) {
          if (const auto at = a.find('@'); at != std::string::npos) a.replace(at, 1, threads);
        }
        const std::string out = tmp / (base[0] + threads + ".json");
        args.insert(args.end(), {"--threads", threads, "--no-timestamp", "--out", out});
        if (base[0] == "calibrate") args.back() = tmp / (std::string("model") + threads + ".json");
        std::string stdout_text;
        if (cli(args, &stdout_text) != 0) {
          mismatches.push_back(base[0] + " failed");
          continue;
        }
        std::string artifact = slurp(args.back()) + "\n--stdout--\n" + stdout_text;
        if (base[0] == "evaluate") {
          for (const char* f : {"pr_curves.csv", "pr_curves.svg"}) {
            artifact += slurp(tmp / (std::string("plots") + threads + "/" + f));
          }
        }
        if (base[0] == "score-dist") artifact += slurp(tmp / (std::string("scores") + threads + ".svg"));
        // Paths differ by design; compare everything else byte for byte.
        for (const std::string& stem : std::vector<std::string>{"plots", "scores", "model", base[0]}) {
          const std::string needle = tmp / (stem + threads);
          for (auto pos = artifact.find(needle); pos != std::string::npos; pos = artifact.find(needle, pos)) {
            artifact.replace(pos, needle.size(), "<path>");
          }
        }
        artifacts.push_back(artifact);
        ++runs;
      }
      if (artifacts.size() == 2 && artifacts[0] != artifacts[1]) {
        mismatches.push_back(base[0] + " on corpus " + std::to_string(corpus));
      }
    }
  }
  std::string detail = fmt("%d runs over 20 corpora, %zu mismatches", runs, mismatches.size());
  if (!mismatches.empty()) detail += " (first: " + mismatches.front() + ")";
  return {mismatches.empty(), detail};
}

// --- 7 ---------------------------------------------------------------------

double mean_class_ece(const std::vector<LabeledScore>& labels) {
  std::map<CategoryId, std::vector<LabeledScore>> by_class;
  for (const auto& l : labels) by_class[l.category_id].push_back(l);
  double sum = 0.0;
  for (const auto& [id, samples] : by_class) sum += expected_calibration_error(samples);
  return by_class.empty() ? 0.0 : sum / static_cast<double>(by_class.size());
}

Verdict calibration_recovery() {
  std::vector<std::string> notes;
  bool ok = true;

  synth::Rng rng(7007);
  std::vector<LabeledScore> platt_data;
  for (int i = 0; i < 10000; ++i) {
    const double s = rng.uniform();
    platt_data.push_back({s, rng.chance(1.0 / (1.0 + std::exp(-(2 * s - 1)))) ? 1 : 0, 1});
  }
  const auto platt = std::get<PlattCalibrator>(fit_platt(platt_data).calibrator);
  const bool platt_ok = std::abs(platt.a - 2.0) <= 0.1 && std::abs(platt.b + 1.0) <= 0.1;
  ok = ok && platt_ok;
  notes.push_back(fmt("Platt A=%.3f B=%.3f", platt.a, platt.b));

  int iso_cases = 0;
  double iso_worst = 0.0;
  for (; iso_cases < 500; ++iso_cases) {
    const auto n = static_cast<std::size_t>(rng.integer(1, iso_cases < 100 ? 20 : 14));
    std::vector<LabeledScore> s;
    for (std::size_t i = 0; i < n; ++i) {
      const double score = rng.chance(0.3) ? rng.integer(0, 4) / 4.0 : rng.uniform();
      s.push_back({score, rng.chance(score) ? 1 : 0, 1});
    }
    const auto fit = fit_isotonic(s, {1});
    auto sorted = s;
    std::sort(sorted.begin(), sorted.end(), [](auto& a, auto& b) { return a.score < b.score; });
    const auto expected = oracle::isotonic_fit(s);
    for (std::size_t i = 0; i < sorted.size(); ++i) {
      iso_worst = std::max(iso_worst, std::abs(calibrate(fit.calibrator, sorted[i].score) - expected[i]));
    }
  }
  ok = ok && iso_worst <= 1e-12;
  notes.push_back(fmt("isotonic %d cases max |diff| %.1e", iso_cases, iso_worst));

  // Fit on one draw of the fixture, score a disjoint draw.
  const auto [cal_d, cal_s] = synth::shifted_scale_corpus(101, 400);
  const auto [tgt_d, tgt_s] = synth::shifted_scale_corpus(202, 400);
  EvalConfig c;
  c.include_pooled = true;
  const double pool_before = *evaluate(tgt_d, tgt_s, c).pooled->ap.all;
  const double ece_before = mean_class_ece(label_for_calibration(tgt_d, tgt_s));
  for (auto method : {CalibrationMethod::Platt, CalibrationMethod::Isotonic, CalibrationMethod::HistogramBinning,
                      CalibrationMethod::Beta, CalibrationMethod::Bbq}) {
    const auto model = fit_per_class(cal_d, cal_s, method);
    const auto calibrated = apply_calibration(tgt_s, model);
    const double pool_after = *evaluate(tgt_d, calibrated, c).pooled->ap.all;
    const double ece_after = mean_class_ece(label_for_calibration(tgt_d, calibrated));
    const bool method_ok = pool_after > pool_before && ece_after <= 0.5 * ece_before;
    ok = ok && method_ok;
    notes.push_back(fmt("%s AP^Pool %.1f->%.1f ECE %.3f->%.3f%s", method_name(method), 100 * pool_before,
                        100 * pool_after, ece_before, ece_after, method_ok ? "" : " (miss)"));
  }
  std::string detail;
  for (const auto& n : notes) detail += (detail.empty() ? "" : "; ") + n;
  return {ok, detail};
}

// --- 8 ---------------------------------------------------------------------

Verdict interpolation_consistency() {
  synth::Rng rng(8008);
  double worst = 0.0;
  int curves = 0;
  for (; curves < 1000; ++curves) {
    const auto n = static_cast<std::size_t>(rng.integer(1, 400));
    const double p = rng.uniform();
    std::vector<std::uint8_t> flags(n);
    for (auto& f : flags) f = rng.chance(p) ? 1 : 0;
    const std::int64_t tp = std::count(flags.begin(), flags.end(), 1);
    const std::int64_t n_gt = std::max<std::int64_t>(1, tp + rng.integer(0, 60));
    const auto curve = pr_curve_from_flags(flags, n_gt);
    worst = std::max(worst, std::abs(average_precision(curve, Interpolation::sampled(101)) -
                                     average_precision(curve, Interpolation::exact())));
  }
  return {worst <= 0.01, fmt("%d curves, max |Sampled(101) - Exact| %.5f", curves, worst)};
}

// --- 9 ---------------------------------------------------------------------

struct ChildStats {
  int status = -1;
  double seconds = 0.0;
  long max_rss_kb = 0;
};

ChildStats run_child(const std::vector<std::string>& args) {
  std::vector<char*> argv;
  for (const auto& a : args) argv.push_back(const_cast<char*>(a.c_str()));
  argv.push_back(nullptr);
  const auto start = Clock::now();
  const pid_t pid = ::fork();
  if (pid == 0) {
    if (!std::freopen("/dev/null", "w", stdout)) std::_Exit(127);
    ::execv(argv[0], argv.data());
    std::_Exit(127);
  }
  ChildStats stats;
  rusage usage{};
  int status = 0;
  ::wait4(pid, &status, 0, &usage);
  stats.seconds = seconds_since(start);
  stats.status = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
  stats.max_rss_kb = usage.ru_maxrss;
  return stats;
}

Verdict performance() {
  TempDir tmp("performance");
  {
    const auto [dataset, dets] = synth::large_corpus(2'000'000, 1203, 20'000, 9009);
    write_dataset(dataset, fs::path(tmp / "gt.json"));
    write_detections(dets, fs::path(tmp / "dets.json"));
  }
  const unsigned cores = std::max(1u, std::thread::hardware_concurrency());
  const auto stats = run_child({LVAP_BINARY, "evaluate", "--gt", tmp / "gt.json", "--dets", tmp / "dets.json",
                                "--preset", "ap-fixed", "--threads", std::to_string(std::min(cores, 8u)),
                                "--out", tmp / "report.json"});
  const double gb = static_cast<double>(stats.max_rss_kb) / (1024.0 * 1024.0);
  const bool ok = stats.status == 0 && stats.seconds <= 120.0 && gb <= 8.0;
  return {ok, fmt("2M dets, 1203 classes, 20k images, 10 IoUs: %.1f s, peak %.2f GB on %u core(s)", stats.seconds,
                  gb, cores)};
}

// --- 10 --------------------------------------------------------------------

// Writes annotation and result files carrying the LVIS v1 field set
// (segmentation polygons, synsets, frequency letters, coco_url, ...).
void write_lvis_shaped(const fs::path& gt_path, const fs::path& dets_path) {
  const auto [dataset, dets] = synth::large_corpus(20'000, 120, 300, 1010);
  nlohmann::json gt;
  gt["info"] = {{"description", "synthetic"}, {"version", "1.0"}, {"year", 2020}};
  gt["licenses"] = nlohmann::json::array({{{"id", 1}, {"name", "none"}, {"url", ""}}});
  auto& images = gt["images"] = nlohmann::json::array();
  for (const auto& im : dataset.images()) {
    images.push_back({{"id", im.id},
                      {"width", 640},
                      {"height", 480},
                      {"coco_url", "http://example.invalid/" + std::to_string(im.id) + ".jpg"},
                      {"date_captured", "2013-11-14 17:02:52"},
                      {"license", 1},
                      {"neg_category_ids", im.negative_category_ids},
                      {"not_exhaustive_category_ids", nlohmann::json::array()}});
  }
  auto& annotations = gt["annotations"] = nlohmann::json::array();
  for (const auto& inst : dataset.instances()) {
    const auto& b = inst.bbox;
    annotations.push_back(
        {{"id", inst.id},
         {"image_id", inst.image_id},
         {"category_id", inst.category_id},
         {"bbox", {b.x, b.y, b.w, b.h}},
         {"area", b.w * b.h},
         {"segmentation", {{b.x, b.y, b.x + b.w, b.y, b.x + b.w, b.y + b.h, b.x, b.y + b.h}}}});
  }
  auto& categories = gt["categories"] = nlohmann::json::array();
  for (const auto& cat : dataset.categories()) {
    const auto n = cat.image_count.value_or(0);
    categories.push_back({{"id", cat.id},
                          {"name", cat.name},
                          {"synset", cat.name + ".n.01"},
                          {"synonyms", {cat.name}},
                          {"def", "synthetic category"},
                          {"image_count", n},
                          {"instance_count", n * 2},
                          {"frequency", n <= 10 ? "r" : n <= 100 ? "c" : "f"}});
  }
  std::ofstream(gt_path) << gt.dump();
  auto results = nlohmann::json::array();
  for (const auto& d : dets.detections) {
    results.push_back({{"image_id", d.image_id},
                       {"category_id", d.category_id},
                       {"bbox", {d.bbox.x, d.bbox.y, d.bbox.w, d.bbox.h}},
                       {"score", d.score}});
  }
  std::ofstream(dets_path) << results.dump();
}

Verdict format_fidelity() {
  TempDir tmp("format");
  std::string gt = tmp / "lvis_gt.json", dt = tmp / "lvis_results.json", source = "LVIS-shaped synthetic files";
  const char* user_gt = std::getenv("LVAP_LVIS_GT");
  const char* user_dt = std::getenv("LVAP_LVIS_DETS");
  if (user_gt && user_dt) {
    gt = user_gt;
    dt = user_dt;
    source = "user-supplied files";
  } else {
    write_lvis_shaped(gt, dt);
  }
  bool ok = true;
  std::string detail = source;
  for (const std::string preset : {"ap-old", "ap-fixed"}) {
    const auto out = tmp / (preset + ".json");
    std::string table;
    const int code = cli({"evaluate", "--gt", gt, "--dets", dt, "--preset", preset, "--format", "table"}, &table);
    const int code_json = cli({"evaluate", "--gt", gt, "--dets", dt, "--preset", preset, "--out", out});
    bool columns = code == 0 && code_json == 0 && table.find("AP  AP_r  AP_c  AP_f") != std::string::npos;
    if (columns) {
      const auto metrics = nlohmann::json::parse(slurp(out))["metrics"];
      for (const char* key : {"AP", "AP_r", "AP_c", "AP_f"}) columns = columns && metrics.contains(key);
      detail += fmt("; %s AP %.1f", preset.c_str(),
                    metrics["AP"].is_number() ? 100 * metrics["AP"].get<double>() : std::nan(""));
    }
    ok = ok && columns;
  }
  return {ok, detail};
}

}  // namespace

int main(int argc, char** argv) {
  const std::vector<std::pair<std::string, std::function<Verdict()>>> criteria = {
      {"toy golden values", toy_golden},
      {"gameability fixture", gameability},
      {"monotone-transform invariance", monotone_invariance},
      {"matcher oracle", matcher_oracle},
      {"pooling identities", pooling_identities},
      {"determinism across worker counts", determinism},
      {"calibration recovery", calibration_recovery},
      {"interpolation consistency", interpolation_consistency},
      {"performance (soft target)", performance},
      {"format fidelity", format_fidelity},
  };
  std::vector<int> selected;
  for (int i = 1; i < argc; ++i) selected.push_back(std::atoi(argv[i]));
  if (selected.empty()) {
    for (int i = 1; i <= static_cast<int>(criteria.size()); ++i) selected.push_back(i);
  }
  int failed = 0;
  for (int number : selected) {
    if (number < 1 || number > static_cast<int>(criteria.size())) {
      std::fprintf(stderr, "unknown criterion %d\n", number);
      return 2;
    }
    const auto& [name, run] = criteria[static_cast<std::size_t>(number - 1)];
    Verdict v;
    try {
      v = run();
    } catch (const std::exception& e) {
      v = {false, std::string("exception: ") + e.what()};
    }
    std::printf("[%s] %2d %s: %s\n", v.pass ? "PASS" : "FAIL", number, name.c_str(), v.detail.c_str());
    std::fflush(stdout);
    failed += v.pass ? 0 : 1;
  }
  return failed == 0 ? 0 : 1;
}
