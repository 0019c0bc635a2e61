#pragma once

#include <string>
#include <string_view>

#include "json.hpp"
#include "lvap/metrics.hpp"

namespace lvap {

enum class ReportFormat { Json, Csv, Table };

ReportFormat parse_report_format(std::string_view text);

// Two reports under different ranking policies (the gaming comparison).
struct GameResult {
  EvalReport baseline;  // per-image limit only
  EvalReport gamed;     // per-class limit, then per-image limit
};

// JSON is the canonical form; report_from_json(report_to_json(r)) == r.
nlohmann::json report_to_json(const EvalReport& report);
EvalReport report_from_json(const nlohmann::json& j);

nlohmann::json sweep_to_json(const SweepResult& result);
SweepResult sweep_from_json(const nlohmann::json& j);

nlohmann::json score_distribution_to_json(const ScoreDistribution& dist);

// Rendered documents. Text tables print AP values x100 with one decimal,
// "-" where a value is undefined.
std::string render_report(const EvalReport& report, ReportFormat format);
std::string render_sweep(const SweepResult& result, ReportFormat format);
std::string render_game(const GameResult& result, ReportFormat format);
std::string render_subset(const EvalReport& report, ReportFormat format);
std::string render_score_distribution(const ScoreDistribution& dist, ReportFormat format);

// Report-file writer: serializes and writes atomically.
void write_report(const EvalReport& report, const std::filesystem::path& path,
                  ReportFormat format);

std::string format_ap(const std::optional<double>& value);  // "25.6" or "-"

}  // namespace lvap
