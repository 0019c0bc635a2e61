#include "lvap/cli.hpp"

#include <chrono>
#include <ctime>
#include <filesystem>
#include <optional>
#include <ostream>
#include <set>
#include <string>

#include "CLI11.hpp"
#include "json.hpp"
#include "lvap/calibration.hpp"
#include "lvap/io.hpp"
#include "lvap/metrics.hpp"
#include "lvap/plots.hpp"
#include "lvap/report_io.hpp"
#include "lvap/toy.hpp"

namespace lvap {

namespace {

namespace fs = std::filesystem;

struct Options {
  std::string gt;
  std::string dets;
  std::string preset;
  std::string dets_per_image;
  std::string dets_per_class;
  std::string iou;
  std::string interp = "sampled:101";
  bool pooled = false;
  std::string groups;
  std::string format;
  std::string out;
  int threads = 1;
  bool no_timestamp = false;
  std::int64_t rare_max = 10;
  std::int64_t common_max = 100;
  std::string axis;
  std::string values;
  std::string method;
  std::string model;
  std::int64_t min_samples = 5;
  int bins = 20;
  std::string plot_dir;
  std::string svg;
};

std::optional<std::int64_t> parse_limit(const std::string& text, const char* flag) {
  if (text == "none") return std::nullopt;
  std::int64_t v = 0;
  std::size_t used = 0;
  try {
    v = std::stoll(text, &used);
  } catch (const std::exception&) {
    used = 0;
  }
  if (used == 0 || used != text.size() || v < 1) {
    throw ConfigError(std::string(flag) + " expects a positive integer or 'none', got '" + text + "'");
  }
  return v;
}

// Flag-level validation; runs before any file is touched.
EvalConfig build_config(const Options& o) {
  EvalConfig config;
  const bool explicit_limits = !o.dets_per_image.empty() || !o.dets_per_class.empty();
  if (!o.preset.empty() && explicit_limits) {
    throw ConfigError("--preset cannot be combined with --dets-per-image or --dets-per-class");
  }
  if (o.preset == "ap-old") {
    config.ranking_policy = RankingPolicy::ap_old();
  } else if (o.preset == "ap-fixed") {
    config.ranking_policy = RankingPolicy::ap_fixed();
  } else if (o.preset == "ap-pool") {
    config.ranking_policy = RankingPolicy::ap_fixed();
    config.include_pooled = true;
  } else if (!o.preset.empty()) {
    throw ConfigError("unknown preset '" + o.preset + "' (expected ap-old, ap-fixed or ap-pool)");
  } else if (explicit_limits) {
    config.ranking_policy = RankingPolicy{};
    if (!o.dets_per_image.empty()) {
      config.ranking_policy.max_dets_per_image = parse_limit(o.dets_per_image, "--dets-per-image");
    }
    if (!o.dets_per_class.empty()) {
      config.ranking_policy.max_dets_per_class = parse_limit(o.dets_per_class, "--dets-per-class");
    }
  }
  if (o.pooled) config.include_pooled = true;
  if (!o.iou.empty()) config.iou_thresholds = parse_iou_list(o.iou);
  config.interpolation = Interpolation::parse(o.interp);
  config.frequency_thresholds = {o.rare_max, o.common_max};
  config.threads = o.threads;
  config.validate();
  return config;
}

ReportFormat output_format(const Options& o) {
  if (!o.format.empty()) return parse_report_format(o.format);
  if (o.out.empty()) return ReportFormat::Table;
  const auto ext = fs::path(o.out).extension().string();
  if (ext == ".csv") return ReportFormat::Csv;
  if (ext == ".txt") return ReportFormat::Table;
  return ReportFormat::Json;
}

std::string utc_now() {
  const auto now = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  std::tm tm{};
  gmtime_r(&now, &tm);
  char buf[32];
  std::strftime(buf, sizeof(buf), "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

std::string stamp(std::string document, ReportFormat format, const Options& o) {
  if (format != ReportFormat::Json || o.no_timestamp) return document;
  auto j = nlohmann::json::parse(document);
  if (j.is_object()) j["generated_at"] = utc_now();
  return j.dump(2) + "\n";
}

void strip_runtime(EvalReport& r, const Options& o) {
  if (o.no_timestamp) r.runtime.reset();
}

// Writes to --out when given (and echoes the table to stdout); otherwise prints.
void emit(const Options& o, std::ostream& out, const std::string& document,
          const std::string& table) {
  if (o.out.empty()) {
    out << document;
    return;
  }
  write_file_atomically(o.out, document);
  out << table;
  out << "wrote " << o.out << "\n";
}

struct Inputs {
  Dataset dataset;
  DetectionSet dets;
};

Inputs load_inputs(const Options& o, std::ostream& err) {
  LoadSummary gt_summary;
  LoadSummary det_summary;
  Inputs in;
  in.dataset = load_dataset(o.gt, &gt_summary);
  in.dets = load_detections(o.dets, in.dataset, &det_summary);
  if (det_summary.clamped_scores > 0) {
    err << "warning: " << det_summary.clamped_scores << " detection scores clamped to [0, 1]\n";
  }
  return in;
}

std::set<FrequencyGroup> parse_groups(const std::string& text) {
  std::set<FrequencyGroup> groups;
  std::size_t start = 0;
  while (start <= text.size()) {
    const auto comma = text.find(',', start);
    const auto token = text.substr(start, comma == std::string::npos ? std::string::npos : comma - start);
    const auto g = parse_group(token);
    if (!g || *g == FrequencyGroup::Unknown) {
      throw ConfigError("--groups expects a list of r, c, f; got '" + token + "'");
    }
    groups.insert(*g);
    if (comma == std::string::npos) break;
    start = comma + 1;
  }
  return groups;
}

std::vector<std::optional<std::int64_t>> parse_values(const std::string& text) {
  std::vector<std::optional<std::int64_t>> values;
  std::size_t start = 0;
  while (start <= text.size()) {
    const auto comma = text.find(',', start);
    values.push_back(parse_limit(
        text.substr(start, comma == std::string::npos ? std::string::npos : comma - start),
        "--values"));
    if (comma == std::string::npos) break;
    start = comma + 1;
  }
  return values;
}

int cmd_evaluate(const Options& o, std::ostream& out, std::ostream& err) {
  const EvalConfig config = build_config(o);
  const ReportFormat format = output_format(o);
  const Inputs in = load_inputs(o, err);
  EvalCurves curves;
  EvalReport report = evaluate(in.dataset, in.dets, config, o.plot_dir.empty() ? nullptr : &curves);
  report.label = o.preset.empty() ? "evaluate" : o.preset;
  strip_runtime(report, o);
  if (report.empty()) err << "warning: no category has groundtruth in the evaluated universe\n";
  if (!o.plot_dir.empty()) {
    fs::create_directories(o.plot_dir);
    write_file_atomically(fs::path(o.plot_dir) / "pr_curves.csv", pr_curves_csv(curves));
    write_file_atomically(fs::path(o.plot_dir) / "pr_curves.svg",
                          pr_curves_svg(curves, "PR curves (" + report.policy.describe() + ")"));
  }
  emit(o, out, stamp(render_report(report, format), format, o),
       render_report(report, ReportFormat::Table));
  return kExitOk;
}

int cmd_sweep(const Options& o, std::ostream& out, std::ostream& err) {
  const EvalConfig config = build_config(o);
  const ReportFormat format = output_format(o);
  SweepAxis axis;
  if (o.axis == "dets-per-image") {
    axis = SweepAxis::DetsPerImage;
  } else if (o.axis == "dets-per-class") {
    axis = SweepAxis::DetsPerClass;
  } else {
    throw ConfigError("--axis expects dets-per-image or dets-per-class");
  }
  const auto values = parse_values(o.values);
  const Inputs in = load_inputs(o, err);
  SweepResult result = sweep(in.dataset, in.dets, axis, values, config);
  for (auto& row : result.rows) strip_runtime(row.report, o);
  emit(o, out, stamp(render_sweep(result, format), format, o),
       render_sweep(result, ReportFormat::Table));
  return kExitOk;
}

int cmd_game(const Options& o, std::ostream& out, std::ostream& err) {
  if (!o.preset.empty()) throw ConfigError("game takes --dets-per-image and --dets-per-class, not --preset");
  Options base = o;
  base.dets_per_image = o.dets_per_image.empty() ? "300" : o.dets_per_image;
  base.dets_per_class.clear();
  Options gamed = base;
  gamed.dets_per_class = o.dets_per_class.empty() ? "10000" : o.dets_per_class;
  const EvalConfig base_config = build_config(base);
  const EvalConfig gamed_config = build_config(gamed);
  const ReportFormat format = output_format(o);
  const Inputs in = load_inputs(o, err);
  GameResult result{evaluate(in.dataset, in.dets, base_config),
                    evaluate(in.dataset, in.dets, gamed_config)};
  result.baseline.label = "baseline";
  result.gamed.label = "gamed";
  strip_runtime(result.baseline, o);
  strip_runtime(result.gamed, o);
  emit(o, out, stamp(render_game(result, format), format, o),
       render_game(result, ReportFormat::Table));
  return kExitOk;
}

int cmd_subset(const Options& o, std::ostream& out, std::ostream& err) {
  const EvalConfig config = build_config(o);
  const ReportFormat format = output_format(o);
  if (o.groups.empty()) throw ConfigError("subset needs --groups");
  const auto groups = parse_groups(o.groups);
  const Inputs in = load_inputs(o, err);
  EvalReport report = subset_evaluate(in.dataset, in.dets, groups, config);
  strip_runtime(report, o);
  emit(o, out, stamp(render_subset(report, format), format, o),
       render_subset(report, ReportFormat::Table));
  return kExitOk;
}

double mean_class_ece(const CalibrationModel& model, std::span<const LabeledScore> labels,
                      bool calibrated) {
  std::map<CategoryId, std::vector<LabeledScore>> per;
  for (const auto& l : labels) {
    LabeledScore s = l;
    if (calibrated) {
      const auto it = model.per_category.find(l.category_id);
      if (it != model.per_category.end()) s.score = calibrate(it->second.calibrator, l.score);
    }
    per[l.category_id].push_back(s);
  }
  if (per.empty()) return 0.0;
  double total = 0.0;
  for (const auto& [id, samples] : per) total += expected_calibration_error(samples);
  return total / static_cast<double>(per.size());
}

int cmd_calibrate(const Options& o, std::ostream& out, std::ostream& err) {
  const CalibrationMethod method = parse_calibration_method(o.method);
  if (o.min_samples < 1) throw ConfigError("--min-samples must be >= 1");
  if (o.threads < 1) throw ConfigError("--threads must be >= 1");
  const Inputs in = load_inputs(o, err);
  const auto labels = label_for_calibration(in.dataset, in.dets, o.threads);
  FitOptions options;
  options.min_samples = o.min_samples;
  const CalibrationModel model = fit_per_class(in.dataset, labels, method, options, o.threads);
  save_model(model, o.out);
  std::int64_t fallbacks = 0;
  std::int64_t non_monotone = 0;
  for (const auto& [id, fit] : model.per_category) {
    fallbacks += fit.info.fallback.empty() ? 0 : 1;
    non_monotone += fit.info.monotone ? 0 : 1;
  }
  char line[160];
  std::snprintf(line, sizeof(line),
                "method %s  categories %zu  labeled detections %zu  fallbacks %lld  non-monotone %lld\n",
                method_name(method), model.per_category.size(), labels.size(),
                static_cast<long long>(fallbacks), static_cast<long long>(non_monotone));
  out << line;
  std::snprintf(line, sizeof(line), "mean per-class ECE on fitting data: %.4f -> %.4f\n",
                mean_class_ece(model, labels, false), mean_class_ece(model, labels, true));
  out << line << "wrote " << o.out << "\n";
  return kExitOk;
}

int cmd_apply(const Options& o, std::ostream& out, std::ostream& err) {
  const CalibrationModel model = load_model(o.model);
  const DetectionSet dets = load_detections(o.dets);
  std::int64_t unknown = 0;
  const DetectionSet calibrated = apply_calibration(dets, model, &unknown);
  if (unknown > 0) {
    err << "warning: " << unknown
        << " detections belong to categories without a calibrator; scores kept\n";
  }
  std::ostringstream buffer;
  write_detections(calibrated, buffer);
  write_file_atomically(o.out, buffer.str());
  out << "calibrated " << calibrated.size() << " detections; wrote " << o.out << "\n";
  return kExitOk;
}

int cmd_score_dist(const Options& o, std::ostream& out, std::ostream& err) {
  if (o.bins < 1) throw ConfigError("--bins must be >= 1");
  const ReportFormat format = output_format(o);
  const FrequencyThresholds thresholds{o.rare_max, o.common_max};
  if (thresholds.rare_max < 0 || thresholds.common_max < thresholds.rare_max) {
    throw ConfigError("--rare-max must be >= 0 and <= --common-max");
  }
  const Inputs in = load_inputs(o, err);
  const auto dist = score_distribution(in.dets, in.dataset, thresholds, o.bins);
  for (const auto& w : dist.warnings) err << "warning: " << w << "\n";
  if (!o.svg.empty()) {
    write_file_atomically(o.svg, score_histogram_svg(dist, "Score distribution by frequency group"));
  }
  emit(o, out, stamp(render_score_distribution(dist, format), format, o),
       render_score_distribution(dist, ReportFormat::Table));
  return kExitOk;
}

int cmd_toy(const Options& o, std::ostream& out, std::ostream& err) {
  const ToyResult result = run_toy();
  const std::string text = render_toy(result);
  if (!o.out.empty()) write_file_atomically(o.out, text);
  out << text;
  if (!result.ok) {
    err << "toy example deviates from its reference values\n";
    return kExitToyMismatch;
  }
  return kExitOk;
}

void add_io(CLI::App* cmd, Options& o) {
  cmd->add_option("--gt", o.gt, "groundtruth annotation JSON")->required();
  cmd->add_option("--dets", o.dets, "detection results JSON")->required();
}

void add_eval(CLI::App* cmd, Options& o, bool with_preset) {
  if (with_preset) {
    cmd->add_option("--preset", o.preset, "ap-old | ap-fixed | ap-pool");
  }
  cmd->add_option("--dets-per-image", o.dets_per_image, "per-image limit N or 'none'");
  cmd->add_option("--dets-per-class", o.dets_per_class, "dataset-wide per-class limit K or 'none'");
  cmd->add_option("--iou", o.iou, "IoU thresholds: 0.5 | 0.5,0.75 | 0.5:0.95:0.05");
  cmd->add_option("--interp", o.interp, "exact | sampled:N");
  cmd->add_flag("--pooled", o.pooled, "also compute AP^Pool");
  cmd->add_option("--rare-max", o.rare_max, "largest image count of a rare category");
  cmd->add_option("--common-max", o.common_max, "largest image count of a common category");
}

// Accepted everywhere so scripted runs can pass the same flags to every
// subcommand; model and detection files carry no timestamp to begin with.
void add_no_timestamp(CLI::App* cmd, Options& o) {
  cmd->add_flag("--no-timestamp", o.no_timestamp, "omit generated_at and runtime fields");
}

void add_output(CLI::App* cmd, Options& o) {
  cmd->add_option("--format", o.format, "json | csv | table");
  cmd->add_option("--out", o.out, "report file");
  add_no_timestamp(cmd, o);
}

void add_threads(CLI::App* cmd, Options& o) {
  cmd->add_option("--threads", o.threads, "worker threads")->check(CLI::PositiveNumber);
}

}  // namespace

int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  Options o;
  CLI::App app{"Long-tail detection AP evaluation"};
  app.name("lvap");
  app.require_subcommand(1);

  auto* evaluate_cmd = app.add_subcommand("evaluate", "AP, AP_r, AP_c, AP_f under a ranking policy");
  add_io(evaluate_cmd, o);
  add_eval(evaluate_cmd, o, true);
  add_output(evaluate_cmd, o);
  add_threads(evaluate_cmd, o);
  evaluate_cmd->add_option("--plot-dir", o.plot_dir, "write PR curve CSV and SVG here");

  auto* sweep_cmd = app.add_subcommand("sweep", "AP across values of one limit");
  add_io(sweep_cmd, o);
  add_eval(sweep_cmd, o, true);
  add_output(sweep_cmd, o);
  add_threads(sweep_cmd, o);
  sweep_cmd->add_option("--axis", o.axis, "dets-per-image | dets-per-class")->required();
  sweep_cmd->add_option("--values", o.values, "comma list, 'none' for no limit")->required();

  auto* game_cmd = app.add_subcommand("game", "per-image limit vs per-class then per-image limit");
  add_io(game_cmd, o);
  add_eval(game_cmd, o, false);
  add_output(game_cmd, o);
  add_threads(game_cmd, o);

  auto* subset_cmd = app.add_subcommand("subset", "evaluate on a subset of frequency groups");
  add_io(subset_cmd, o);
  add_eval(subset_cmd, o, true);
  add_output(subset_cmd, o);
  add_threads(subset_cmd, o);
  subset_cmd->add_option("--groups", o.groups, "comma list of r, c, f")->required();

  auto* calibrate_cmd = app.add_subcommand("calibrate", "fit per-class score calibrators");
  add_io(calibrate_cmd, o);
  add_threads(calibrate_cmd, o);
  add_no_timestamp(calibrate_cmd, o);
  calibrate_cmd->add_option("--method", o.method, "platt | isotonic | histbin | beta | bbq")->required();
  calibrate_cmd->add_option("--out", o.out, "model JSON")->required();
  calibrate_cmd->add_option("--min-samples", o.min_samples, "fewer labeled detections -> identity");

  auto* apply_cmd = app.add_subcommand("apply", "rescore detections with a calibration model");
  apply_cmd->add_option("--model", o.model, "model JSON")->required();
  apply_cmd->add_option("--dets", o.dets, "detection results JSON")->required();
  apply_cmd->add_option("--out", o.out, "calibrated results JSON")->required();
  add_threads(apply_cmd, o);
  add_no_timestamp(apply_cmd, o);

  auto* dist_cmd = app.add_subcommand("score-dist", "score statistics per frequency group");
  add_io(dist_cmd, o);
  add_output(dist_cmd, o);
  add_threads(dist_cmd, o);
  dist_cmd->add_option("--bins", o.bins, "histogram bins");
  dist_cmd->add_option("--rare-max", o.rare_max, "largest image count of a rare category");
  dist_cmd->add_option("--common-max", o.common_max, "largest image count of a common category");
  dist_cmd->add_option("--svg", o.svg, "write a histogram SVG here");

  auto* toy_cmd = app.add_subcommand("toy", "two-class example: per-image limits reward odd rankings");
  toy_cmd->add_option("--out", o.out, "also write the text to this file");
  add_threads(toy_cmd, o);
  add_no_timestamp(toy_cmd, o);

  std::vector<std::string> reversed(args.rbegin(), args.rend());
  try {
    app.parse(reversed);
  } catch (const CLI::CallForHelp&) {
    out << app.help();
    return kExitOk;
  } catch (const CLI::CallForAllHelp&) {
    out << app.help("", CLI::AppFormatMode::All);
    return kExitOk;
  } catch (const CLI::ParseError& e) {
    err << "error: " << e.what() << "\n";
    return kExitInput;
  }

  try {
    if (evaluate_cmd->parsed()) return cmd_evaluate(o, out, err);
    if (sweep_cmd->parsed()) return cmd_sweep(o, out, err);
    if (game_cmd->parsed()) return cmd_game(o, out, err);
    if (subset_cmd->parsed()) return cmd_subset(o, out, err);
    if (calibrate_cmd->parsed()) return cmd_calibrate(o, out, err);
    if (apply_cmd->parsed()) return cmd_apply(o, out, err);
    if (dist_cmd->parsed()) return cmd_score_dist(o, out, err);
    if (toy_cmd->parsed()) return cmd_toy(o, out, err);
  } catch (const LoadError& e) {
    err << "error (" << load_error_name(e.kind()) << "): " << e.what() << "\n";
    return kExitInput;
  } catch (const ConfigError& e) {
    err << "error: " << e.what() << "\n";
    return kExitInput;
  } catch (const DatasetError& e) {
    err << "error: " << e.what() << "\n";
    return kExitInput;
  } catch (const fs::filesystem_error& e) {
    err << "error: " << e.what() << "\n";
    return kExitInput;
  } catch (const std::exception& e) {
    err << "internal error: " << e.what() << "\n";
    return kExitInternal;
  }
  return kExitInput;
}

}  // namespace lvap
