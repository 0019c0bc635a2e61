#include <cmath>

#include "doctest.h"
#include "lvap/core.hpp"

using namespace lvap;

namespace {

Category cat(CategoryId id, std::optional<std::int64_t> count = std::nullopt) {
  return {id, "c" + std::to_string(id), count};
}

}  // namespace

TEST_CASE("box area and validity") {
  CHECK(BoundingBox{0, 0, 3, 4}.area() == 12.0);
  CHECK(BoundingBox{0, 0, 0, 4}.valid());
  CHECK_FALSE(BoundingBox{0, 0, -1, 4}.valid());
  CHECK_FALSE(BoundingBox{0, 0, std::nan(""), 4}.valid());
}

TEST_CASE("frequency groups use inclusive upper bounds") {
  const FrequencyThresholds t;
  CHECK(frequency_group(cat(1, 1), t) == FrequencyGroup::Rare);
  CHECK(frequency_group(cat(1, 10), t) == FrequencyGroup::Rare);
  CHECK(frequency_group(cat(1, 11), t) == FrequencyGroup::Common);
  CHECK(frequency_group(cat(1, 100), t) == FrequencyGroup::Common);
  CHECK(frequency_group(cat(1, 101), t) == FrequencyGroup::Frequent);
  CHECK(frequency_group(cat(1, 569), t) == FrequencyGroup::Frequent);
  CHECK(frequency_group(cat(1), t) == FrequencyGroup::Unknown);
  CHECK(frequency_group(cat(1, 0), t) == FrequencyGroup::Unknown);
  CHECK(frequency_group(cat(1, 40), {50, 500}) == FrequencyGroup::Rare);
}

TEST_CASE("group names round trip") {
  for (auto g : {FrequencyGroup::Rare, FrequencyGroup::Common, FrequencyGroup::Frequent,
                 FrequencyGroup::Unknown}) {
    CHECK(parse_group(group_letter(g)) == g);
    CHECK(parse_group(group_name(g)) == g);
  }
  CHECK_FALSE(parse_group("x").has_value());
}

TEST_CASE("dataset rejects inconsistent input") {
  ImageRecord image;
  image.id = 1;
  CHECK_THROWS_AS(Dataset({cat(1), cat(1)}, {image}, {}), DatasetError);
  CHECK_THROWS_AS(Dataset({cat(1)}, {image, image}, {}), DatasetError);
  CHECK_THROWS_AS(Dataset({cat(1)}, {image}, {{1, 2, 1, {0, 0, 1, 1}, false}}), DatasetError);
  CHECK_THROWS_AS(Dataset({cat(1)}, {image}, {{1, 1, 9, {0, 0, 1, 1}, false}}), DatasetError);
  CHECK_THROWS_AS(Dataset({cat(1)}, {image},
                          {{1, 1, 1, {0, 0, 1, 1}, false}, {1, 1, 1, {0, 0, 1, 1}, false}}),
                  DatasetError);
  CHECK_THROWS_AS(Dataset({cat(1, -3)}, {image}, {}), DatasetError);

  ImageRecord fed = image;
  fed.federated = true;
  fed.negative_category_ids = {1};
  CHECK_THROWS_AS(Dataset({cat(1)}, {fed}, {{1, 1, 1, {0, 0, 1, 1}, false}}), DatasetError);
  fed.negative_category_ids = {7};
  CHECK_THROWS_AS(Dataset({cat(1)}, {fed}, {}), DatasetError);
}

TEST_CASE("federated images evaluate positives and negatives only") {
  ImageRecord plain;
  plain.id = 1;
  ImageRecord fed;
  fed.id = 2;
  fed.federated = true;
  fed.negative_category_ids = {3};
  fed.not_exhaustive_category_ids = {1};
  const Dataset d({cat(1), cat(2), cat(3), cat(4)}, {plain, fed},
                  {{10, 2, 1, {0, 0, 5, 5}, false}});
  // The annotated category joins the positive set.
  CHECK(d.find_image(2)->positive_category_ids == std::vector<CategoryId>{1});
  CHECK(d.evaluates(1, 4));
  CHECK(d.evaluates(2, 1));
  CHECK_FALSE(d.evaluates(2, 2));
  CHECK(d.evaluates(2, 3));
  CHECK_FALSE(d.evaluates(2, 4));
  CHECK_FALSE(d.evaluates(3, 1));
  CHECK_FALSE(d.evaluates(1, 99));
  CHECK(d.find_image(2)->is_not_exhaustive(1));
  CHECK(d.find_image(2)->evaluation_universe() == std::vector<CategoryId>{1, 3});
}

TEST_CASE("ranking order is score descending then id ascending") {
  Detection a{0, 1, 1, {}, 0.5};
  Detection b{1, 1, 1, {}, 0.5};
  Detection c{2, 1, 1, {}, 0.9};
  CHECK(ranks_before(a, b));
  CHECK_FALSE(ranks_before(b, a));
  CHECK(ranks_before(c, a));
  CHECK_FALSE(ranks_before(a, a));
}

TEST_CASE("ranking policy presets and validation") {
  CHECK(RankingPolicy::ap_old().max_dets_per_image == 300);
  CHECK_FALSE(RankingPolicy::ap_old().max_dets_per_class.has_value());
  CHECK(RankingPolicy::ap_fixed().max_dets_per_class == 10000);
  CHECK_FALSE(RankingPolicy::ap_fixed().max_dets_per_image.has_value());
  CHECK_THROWS_AS(RankingPolicy({0, std::nullopt}).validate(), ConfigError);
  CHECK_THROWS_AS(RankingPolicy({std::nullopt, 0}).validate(), ConfigError);
  CHECK_NOTHROW(RankingPolicy{}.validate());
}

TEST_CASE("interpolation parsing") {
  CHECK(Interpolation::parse("exact") == Interpolation::exact());
  CHECK(Interpolation::parse("sampled:101") == Interpolation::sampled(101));
  CHECK(Interpolation::parse("sampled") == Interpolation::sampled(101));
  CHECK(Interpolation::parse("sampled:11").describe() == "sampled:11");
  CHECK_THROWS_AS(Interpolation::parse("sampled:1"), ConfigError);
  CHECK_THROWS_AS(Interpolation::parse("sampled:x"), ConfigError);
  CHECK_THROWS_AS(Interpolation::parse("cubic"), ConfigError);
}

TEST_CASE("IoU threshold lists") {
  const auto defaults = default_iou_thresholds();
  REQUIRE(defaults.size() == 10);
  CHECK(defaults.front() == 0.5);
  CHECK(defaults.back() == doctest::Approx(0.95));
  CHECK(parse_iou_list("0.5") == std::vector<double>{0.5});
  CHECK(parse_iou_list("0.5,0.75") == std::vector<double>{0.5, 0.75});
  const auto range = parse_iou_list("0.5:0.95:0.05");
  REQUIRE(range.size() == 10);
  for (std::size_t i = 0; i < range.size(); ++i) CHECK(range[i] == doctest::Approx(defaults[i]));
  CHECK_THROWS_AS(parse_iou_list("0.5,abc"), ConfigError);
  CHECK_THROWS_AS(parse_iou_list("0.5:0.9"), ConfigError);

  EvalConfig config;
  config.iou_thresholds = {0.75, 0.5};
  CHECK_THROWS_AS(config.validate(), ConfigError);
  config.iou_thresholds = {0.0};
  CHECK_THROWS_AS(config.validate(), ConfigError);
  config.iou_thresholds = {0.5};
  config.threads = 0;
  CHECK_THROWS_AS(config.validate(), ConfigError);
  config.threads = 4;
  config.frequency_thresholds = {100, 10};
  CHECK_THROWS_AS(config.validate(), ConfigError);
}
