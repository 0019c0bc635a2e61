#include "lvap/report_io.hpp"

#include <cstdio>
#include <sstream>

#include "lvap/io.hpp"

namespace lvap {

using nlohmann::json;

namespace {

json opt(const std::optional<double>& v) { return v ? json(*v) : json(nullptr); }
json opt(const std::optional<std::int64_t>& v) { return v ? json(*v) : json(nullptr); }

std::optional<double> opt_double(const json& j) {
  if (j.is_null()) return std::nullopt;
  return j.get<double>();
}

std::optional<std::int64_t> opt_int(const json& j) {
  if (j.is_null()) return std::nullopt;
  return j.get<std::int64_t>();
}

json opt_list(const std::vector<std::optional<double>>& values) {
  json out = json::array();
  for (const auto& v : values) out.push_back(opt(v));
  return out;
}

std::vector<std::optional<double>> opt_list_from(const json& j) {
  std::vector<std::optional<double>> out;
  for (const auto& v : j) out.push_back(opt_double(v));
  return out;
}

json means_to_json(const GroupMeans& m, const std::string& prefix) {
  return {{prefix, opt(m.all)},
          {prefix + "_r", opt(m.rare)},
          {prefix + "_c", opt(m.common)},
          {prefix + "_f", opt(m.frequent)}};
}

GroupMeans means_from_json(const json& j, const std::string& prefix) {
  return {opt_double(j.at(prefix)), opt_double(j.at(prefix + "_r")),
          opt_double(j.at(prefix + "_c")), opt_double(j.at(prefix + "_f"))};
}

FrequencyGroup group_from_letter(const std::string& s) {
  auto g = parse_group(s);
  if (!g) throw std::invalid_argument("unknown frequency group '" + s + "'");
  return *g;
}

// Right-aligned columns separated by two spaces.
std::string align(const std::vector<std::vector<std::string>>& rows) {
  std::vector<std::size_t> widths;
  for (const auto& row : rows) {
    if (widths.size() < row.size()) widths.resize(row.size(), 0);
    for (std::size_t i = 0; i < row.size(); ++i) widths[i] = std::max(widths[i], row[i].size());
  }
  std::string out;
  for (const auto& row : rows) {
    for (std::size_t i = 0; i < row.size(); ++i) {
      if (i) out += "  ";
      out += std::string(widths[i] - row[i].size(), ' ') + row[i];
    }
    out += '\n';
  }
  return out;
}

std::string csv_value(const std::optional<double>& v) { return v ? format_double(*v) : ""; }

std::string limit_text(const std::optional<std::int64_t>& v) {
  return v ? std::to_string(*v) : std::string("none");
}

std::string delta_text(const std::optional<double>& to, const std::optional<double>& from) {
  if (!to || !from) return "-";
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%+.1f", 100.0 * (*to - *from));
  return buf;
}

std::string iou_text(const std::vector<double>& thresholds) {
  char buf[64];
  if (thresholds.size() == 1) {
    std::snprintf(buf, sizeof(buf), "%.2f", thresholds.front());
  } else {
    std::snprintf(buf, sizeof(buf), "%.2f:%.2f (%zu)", thresholds.front(), thresholds.back(),
                  thresholds.size());
  }
  return buf;
}

std::string report_header(const EvalReport& r) {
  return "policy: " + r.policy.describe() + "  iou: " + iou_text(r.iou_thresholds) +
         "  interp: " + r.interpolation.describe() + "  classes: " +
         std::to_string(r.evaluated_classes) + "\n";
}

std::vector<std::string> ap_cells(const GroupMeans& m) {
  return {format_ap(m.all), format_ap(m.rare), format_ap(m.common), format_ap(m.frequent)};
}

void append_csv_means(std::string& out, const std::string& prefix, const std::string& metric,
                      const GroupMeans& m) {
  out += prefix + metric + ",all," + csv_value(m.all) + "\n";
  out += prefix + metric + ",r," + csv_value(m.rare) + "\n";
  out += prefix + metric + ",c," + csv_value(m.common) + "\n";
  out += prefix + metric + ",f," + csv_value(m.frequent) + "\n";
}

}  // namespace

ReportFormat parse_report_format(std::string_view text) {
  if (text == "json") return ReportFormat::Json;
  if (text == "csv") return ReportFormat::Csv;
  if (text == "table" || text == "text") return ReportFormat::Table;
  throw ConfigError("unknown report format '" + std::string(text) + "'");
}

std::string format_ap(const std::optional<double>& value) {
  if (!value) return "-";
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.1f", 100.0 * *value);
  return buf;
}

json report_to_json(const EvalReport& r) {
  json classes = json::array();
  for (const auto& c : r.classes) {
    classes.push_back({{"category_id", c.category_id},
                       {"name", c.name},
                       {"group", group_letter(c.group)},
                       {"n_gt", c.n_gt},
                       {"n_dets", c.n_dets},
                       {"AP", opt(c.ap)},
                       {"ap_per_iou", opt_list(c.ap_per_threshold)}});
  }
  json j = {
      {"label", r.label},
      {"config",
       {{"iou_thresholds", r.iou_thresholds},
        {"policy",
         {{"dets_per_image", opt(r.policy.max_dets_per_image)},
          {"dets_per_class", opt(r.policy.max_dets_per_class)}}},
        {"interpolation", r.interpolation.describe()},
        {"frequency_thresholds",
         {{"rare_max", r.frequency_thresholds.rare_max},
          {"common_max", r.frequency_thresholds.common_max}}}}},
      {"counts",
       {{"input_detections", r.input_detections},
        {"evaluated_detections", r.evaluated_detections},
        {"evaluated_classes", r.evaluated_classes}}},
      {"metrics", means_to_json(r.ap, "AP")},
      {"ap_per_iou", opt_list(r.ap_per_threshold)},
      {"classes", classes}};
  if (r.pooled) {
    json pooled = means_to_json(r.pooled->ap, "AP_pool");
    pooled["ap_per_iou"] = opt_list(r.pooled->ap_per_threshold);
    j["pooled"] = pooled;
  }
  if (r.runtime) {
    j["runtime"] = {{"filter_ms", r.runtime->filter_ms},
                    {"policy_ms", r.runtime->policy_ms},
                    {"plan_ms", r.runtime->plan_ms},
                    {"match_and_score_ms", r.runtime->match_and_score_ms},
                    {"total_ms", r.runtime->total_ms}};
  }
  return j;
}

EvalReport report_from_json(const json& j) {
  EvalReport r;
  r.label = j.at("label").get<std::string>();
  const auto& config = j.at("config");
  r.iou_thresholds = config.at("iou_thresholds").get<std::vector<double>>();
  r.policy.max_dets_per_image = opt_int(config.at("policy").at("dets_per_image"));
  r.policy.max_dets_per_class = opt_int(config.at("policy").at("dets_per_class"));
  r.interpolation = Interpolation::parse(config.at("interpolation").get<std::string>());
  r.frequency_thresholds.rare_max = config.at("frequency_thresholds").at("rare_max");
  r.frequency_thresholds.common_max = config.at("frequency_thresholds").at("common_max");
  const auto& counts = j.at("counts");
  r.input_detections = counts.at("input_detections");
  r.evaluated_detections = counts.at("evaluated_detections");
  r.evaluated_classes = counts.at("evaluated_classes");
  r.ap = means_from_json(j.at("metrics"), "AP");
  r.ap_per_threshold = opt_list_from(j.at("ap_per_iou"));
  for (const auto& c : j.at("classes")) {
    ClassResult cls;
    cls.category_id = c.at("category_id");
    cls.name = c.at("name").get<std::string>();
    cls.group = group_from_letter(c.at("group").get<std::string>());
    cls.n_gt = c.at("n_gt");
    cls.n_dets = c.at("n_dets");
    cls.ap = opt_double(c.at("AP"));
    cls.ap_per_threshold = opt_list_from(c.at("ap_per_iou"));
    r.classes.push_back(std::move(cls));
  }
  if (j.contains("pooled")) {
    PooledResult pooled;
    pooled.ap = means_from_json(j.at("pooled"), "AP_pool");
    pooled.ap_per_threshold = opt_list_from(j.at("pooled").at("ap_per_iou"));
    r.pooled = pooled;
  }
  if (j.contains("runtime")) {
    const auto& rt = j.at("runtime");
    r.runtime = RuntimeStats{rt.at("filter_ms"), rt.at("policy_ms"), rt.at("plan_ms"),
                             rt.at("match_and_score_ms"), rt.at("total_ms")};
  }
  return r;
}

json sweep_to_json(const SweepResult& result) {
  json rows = json::array();
  for (const auto& row : result.rows) {
    rows.push_back({{"value", opt(row.value)}, {"report", report_to_json(row.report)}});
  }
  return {{"axis", axis_label(result.axis)}, {"rows", rows}};
}

SweepResult sweep_from_json(const json& j) {
  SweepResult result;
  result.axis = j.at("axis").get<std::string>() == "dets/im" ? SweepAxis::DetsPerImage
                                                             : SweepAxis::DetsPerClass;
  for (const auto& row : j.at("rows")) {
    result.rows.push_back({opt_int(row.at("value")), report_from_json(row.at("report"))});
  }
  return result;
}

json score_distribution_to_json(const ScoreDistribution& dist) {
  json groups = json::array();
  for (const auto& g : dist.groups) {
    groups.push_back({{"group", group_name(g.group)},
                      {"count", g.count},
                      {"mean", opt(g.mean)},
                      {"normalized_mean", opt(g.normalized_mean)},
                      {"histogram", g.histogram}});
  }
  return {{"bins", dist.bins}, {"groups", groups}, {"warnings", dist.warnings}};
}

std::string render_report(const EvalReport& r, ReportFormat format) {
  switch (format) {
    case ReportFormat::Json: return report_to_json(r).dump(2) + "\n";
    case ReportFormat::Csv: {
      std::string out = "metric,group,value\n";
      append_csv_means(out, "", "AP", r.ap);
      if (r.pooled) append_csv_means(out, "", "AP_pool", r.pooled->ap);
      return out;
    }
    case ReportFormat::Table: {
      std::vector<std::vector<std::string>> rows = {{"AP", "AP_r", "AP_c", "AP_f"}};
      rows.push_back(ap_cells(r.ap));
      std::string out = report_header(r) + align(rows);
      if (r.pooled) {
        out += align({{"AP^Pool", "AP^Pool_r", "AP^Pool_c", "AP^Pool_f"}, ap_cells(r.pooled->ap)});
      }
      return out;
    }
  }
  return {};
}

std::string render_sweep(const SweepResult& result, ReportFormat format) {
  switch (format) {
    case ReportFormat::Json: return sweep_to_json(result).dump(2) + "\n";
    case ReportFormat::Csv: {
      std::string out = std::string(axis_label(result.axis)) + ",metric,group,value\n";
      for (const auto& row : result.rows) {
        append_csv_means(out, limit_text(row.value) + ",", "AP", row.report.ap);
        if (row.report.pooled) {
          append_csv_means(out, limit_text(row.value) + ",", "AP_pool", row.report.pooled->ap);
        }
      }
      return out;
    }
    case ReportFormat::Table: {
      const bool pooled = !result.rows.empty() && result.rows.front().report.pooled.has_value();
      std::vector<std::vector<std::string>> rows;
      std::vector<std::string> header = {axis_label(result.axis), "AP", "AP_r", "AP_c", "AP_f"};
      if (pooled) {
        for (const char* h : {"AP^Pool", "AP^Pool_r", "AP^Pool_c", "AP^Pool_f"}) {
          header.push_back(h);
        }
      }
      rows.push_back(header);
      for (const auto& row : result.rows) {
        std::vector<std::string> cells = {limit_text(row.value)};
        for (auto& c : ap_cells(row.report.ap)) cells.push_back(c);
        if (pooled && row.report.pooled) {
          for (auto& c : ap_cells(row.report.pooled->ap)) cells.push_back(c);
        }
        rows.push_back(cells);
      }
      return align(rows);
    }
  }
  return {};
}

std::string render_game(const GameResult& result, ReportFormat format) {
  const auto& a = result.baseline;
  const auto& b = result.gamed;
  switch (format) {
    case ReportFormat::Json: {
      json delta = {{"AP", nullptr}, {"AP_r", nullptr}, {"AP_c", nullptr}, {"AP_f", nullptr}};
      const std::optional<double> pairs[4][2] = {{a.ap.all, b.ap.all},
                                                 {a.ap.rare, b.ap.rare},
                                                 {a.ap.common, b.ap.common},
                                                 {a.ap.frequent, b.ap.frequent}};
      const char* names[4] = {"AP", "AP_r", "AP_c", "AP_f"};
      for (int i = 0; i < 4; ++i) {
        if (pairs[i][0] && pairs[i][1]) delta[names[i]] = *pairs[i][1] - *pairs[i][0];
      }
      return json{{"baseline", report_to_json(a)}, {"gamed", report_to_json(b)}, {"delta", delta}}
                 .dump(2) +
             "\n";
    }
    case ReportFormat::Csv: {
      std::string out = "row,metric,group,value\n";
      append_csv_means(out, "baseline,", "AP", a.ap);
      append_csv_means(out, "gamed,", "AP", b.ap);
      return out;
    }
    case ReportFormat::Table: {
      auto row = [](const EvalReport& r) {
        std::vector<std::string> cells = {limit_text(r.policy.max_dets_per_class),
                                          limit_text(r.policy.max_dets_per_image)};
        for (auto& c : ap_cells(r.ap)) cells.push_back(c);
        return cells;
      };
      return align({{"dets/class", "dets/im", "AP", "AP_r", "AP_c", "AP_f"},
                    row(a),
                    row(b),
                    {"delta", "", delta_text(b.ap.all, a.ap.all),
                     delta_text(b.ap.rare, a.ap.rare), delta_text(b.ap.common, a.ap.common),
                     delta_text(b.ap.frequent, a.ap.frequent)}});
    }
  }
  return {};
}

std::string render_subset(const EvalReport& r, ReportFormat format) {
  if (format != ReportFormat::Table) return render_report(r, format);
  std::int64_t instances = 0;
  for (const auto& c : r.classes) {
    if (c.ap) instances += c.n_gt;
  }
  char per_class[32] = "-";
  if (r.evaluated_classes > 0) {
    std::snprintf(per_class, sizeof(per_class), "%.1f",
                  static_cast<double>(instances) / static_cast<double>(r.evaluated_classes));
  }
  std::string subset = r.label.rfind("subset ", 0) == 0 ? r.label.substr(7) : r.label;
  std::string out = report_header(r);
  out += align({{"subset", "# classes", "instances/class", "AP", "AP_r", "AP_c", "AP_f"},
                {subset, std::to_string(r.evaluated_classes), per_class, format_ap(r.ap.all),
                 format_ap(r.ap.rare), format_ap(r.ap.common), format_ap(r.ap.frequent)}});
  if (r.empty()) out += "warning: no evaluated classes in this subset\n";
  return out;
}

std::string render_score_distribution(const ScoreDistribution& dist, ReportFormat format) {
  auto num = [](const std::optional<double>& v) {
    if (!v) return std::string("-");
    char buf[32];
    std::snprintf(buf, sizeof(buf), "%.4f", *v);
    return std::string(buf);
  };
  switch (format) {
    case ReportFormat::Json: return score_distribution_to_json(dist).dump(2) + "\n";
    case ReportFormat::Csv: {
      std::string out = "group,count,mean,normalized_mean";
      for (int b = 0; b < dist.bins; ++b) out += ",bin" + std::to_string(b);
      out += "\n";
      for (const auto& g : dist.groups) {
        out += std::string(group_name(g.group)) + "," + std::to_string(g.count) + "," +
               csv_value(g.mean) + "," + csv_value(g.normalized_mean);
        for (auto h : g.histogram) out += "," + std::to_string(h);
        out += "\n";
      }
      return out;
    }
    case ReportFormat::Table: {
      std::vector<std::vector<std::string>> rows = {{"group", "count", "mean", "normalized"}};
      for (const auto& g : dist.groups) {
        rows.push_back({group_name(g.group), std::to_string(g.count), num(g.mean),
                        num(g.normalized_mean)});
      }
      std::string out = align(rows);
      for (const auto& w : dist.warnings) out += "warning: " + w + "\n";
      return out;
    }
  }
  return {};
}

void write_report(const EvalReport& report, const std::filesystem::path& path,
                  ReportFormat format) {
  write_file_atomically(path, render_report(report, format));
}

}  // namespace lvap
