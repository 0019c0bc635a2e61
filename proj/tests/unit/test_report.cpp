#include "doctest.h"
#include "lvap/report_io.hpp"
#include "synth.hpp"

using namespace lvap;

TEST_CASE("report JSON round-trips exactly") {
  synth::Rng rng(51);
  for (int trial = 0; trial < 30; ++trial) {
    const auto [dataset, dets] = synth::random_corpus(rng);
    EvalConfig c;
    c.include_pooled = rng.chance(0.5);
    c.ranking_policy = RankingPolicy{rng.integer(1, 5), std::nullopt};
    auto r = evaluate(dataset, dets, c);
    r.label = "trial";
    CHECK(report_from_json(report_to_json(r)) == r);
    CHECK(report_from_json(nlohmann::json::parse(report_to_json(r).dump())) == r);

    const std::vector<std::optional<std::int64_t>> values = {1, std::nullopt};
    const auto s = sweep(dataset, dets, SweepAxis::DetsPerImage, values, c);
    CHECK(sweep_from_json(nlohmann::json::parse(sweep_to_json(s).dump())) == s);
  }
}

TEST_CASE("text layouts carry the expected columns") {
  synth::Rng rng(52);
  const auto [dataset, dets] = synth::random_corpus(rng);
  EvalConfig c;
  c.include_pooled = true;
  const auto r = evaluate(dataset, dets, c);
  const auto table = render_report(r, ReportFormat::Table);
  CHECK(table.find("AP  AP_r  AP_c  AP_f") != std::string::npos);
  CHECK(table.find("AP^Pool  AP^Pool_r  AP^Pool_c  AP^Pool_f") != std::string::npos);
  CHECK(render_report(r, ReportFormat::Csv).rfind("metric,group,value\n", 0) == 0);

  const std::vector<std::optional<std::int64_t>> values = {10, 300};
  c.include_pooled = false;
  const auto s = sweep(dataset, dets, SweepAxis::DetsPerImage, values, c);
  const auto sweep_table = render_sweep(s, ReportFormat::Table);
  const auto header = sweep_table.substr(0, sweep_table.find('\n'));
  CHECK(header.find("dets/im") != std::string::npos);
  CHECK(header.find("AP_f") != std::string::npos);
  const auto class_sweep = sweep(dataset, dets, SweepAxis::DetsPerClass, values, c);
  CHECK(render_sweep(class_sweep, ReportFormat::Table).find("dets/class") != std::string::npos);

  const GameResult game{r, r};
  const auto game_table = render_game(game, ReportFormat::Table);
  CHECK(game_table.find("dets/class  dets/im") != std::string::npos);
  CHECK(game_table.find("delta") != std::string::npos);
  const auto game_json = nlohmann::json::parse(render_game(game, ReportFormat::Json));
  if (r.ap.all) CHECK(game_json["delta"]["AP"] == 0.0);

  const auto subset = render_subset(r, ReportFormat::Table);
  CHECK(subset.find("# classes") != std::string::npos);
  CHECK(subset.find("instances/class") != std::string::npos);
}

TEST_CASE("AP formatting") {
  CHECK(format_ap(0.256) == "25.6");
  CHECK(format_ap(1.0) == "100.0");
  CHECK(format_ap(std::nullopt) == "-");
  CHECK(parse_report_format("text") == ReportFormat::Table);
  CHECK_THROWS_AS(parse_report_format("xml"), ConfigError);
}
