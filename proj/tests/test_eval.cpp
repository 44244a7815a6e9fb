#include <cmath>

#include "doctest.h"
#include "semtrack/error.hpp"
#include "semtrack/eval.hpp"
#include "test_support.hpp"

using namespace semtrack;

namespace {

// Direct count of overlaps strictly above t.
double count_ratio(const std::vector<double>& o, double t) {
  double c = 0;
  for (double v : o) c += v > t ? 1.0 : 0.0;
  return c / static_cast<double>(o.size());
}

}  // namespace

TEST_CASE("overlap series delegates to iou") {
  const std::vector<BBox> gt{BBox::from_corner(0, 0, 10, 10), BBox::from_corner(5, 5, 10, 10),
                             BBox::from_corner(0, 0, 4, 4)};
  CHECK(overlap_series(gt, gt) == std::vector<double>{1.0, 1.0, 1.0});
  const std::vector<BBox> pred{BBox::from_corner(5, 0, 10, 10), BBox::from_corner(30, 30, 5, 5),
                               BBox::from_corner(0, 0, 2, 4)};
  const auto o = overlap_series(pred, gt);
  CHECK(o[0] == doctest::Approx(testing::raster_iou(5, 0, 10, 10, 0, 0, 10, 10)).epsilon(1e-12));
  CHECK(o[1] == 0.0);
  CHECK(o[2] == doctest::Approx(0.5).epsilon(1e-12));
  CHECK_THROWS_AS(overlap_series(pred, std::span(gt).first(2)), Error);
}

TEST_CASE("success curve on the two-frame fixture") {
  const std::vector<double> o{0.3, 0.7};
  const auto grid = default_threshold_grid();
  REQUIRE(grid.size() == 21);
  const SuccessCurve c = success_curve(o, grid);
  CHECK(c.ratios[10] == 0.5);
  CHECK(c.thresholds[10] == 0.5);
  for (std::size_t i = 0; i < grid.size(); ++i) CHECK(c.ratios[i] == count_ratio(o, grid[i]));
  // Ratios are 1 up to 0.3 exclusive (0..0.25: 6 points), 0.5 for 0.3..0.65 (8 points), 0 after.
  CHECK(c.auc == doctest::Approx((6.0 + 8 * 0.5) / 20.0).epsilon(1e-12));
}

TEST_CASE("perfect overlaps give auc 1") {
  const std::vector<double> o(17, 1.0);
  const SuccessCurve c = success_curve(o, default_threshold_grid());
  for (std::size_t i = 0; i + 1 < c.ratios.size(); ++i) CHECK(c.ratios[i] == 1.0);
  CHECK(c.ratios.back() == 0.0);
  CHECK(c.auc == 1.0);
  const std::vector<BBox> gt{BBox::from_corner(1, 2, 3, 4), BBox::from_corner(2, 3, 4, 5)};
  CHECK(evaluate_sequence("s", gt, gt, {}, default_threshold_grid()).curve.auc == 1.0);
}

TEST_CASE("success ratios never increase with the threshold") {
  Rng rng(3);
  for (int trial = 0; trial < 200; ++trial) {
    std::vector<double> o(1 + trial % 37);
    for (double& v : o) v = uniform(rng) < 0.2 ? 0.0 : uniform(rng);
    const SuccessCurve c = success_curve(o, default_threshold_grid());
    for (std::size_t i = 1; i < c.ratios.size(); ++i) CHECK(c.ratios[i] <= c.ratios[i - 1]);
    CHECK(c.auc >= 0.0);
    CHECK(c.auc <= 1.0);
  }
}

TEST_CASE("success curve input validation") {
  const std::vector<double> none;
  CHECK_THROWS_AS(success_curve(none, default_threshold_grid()), Error);
  const std::vector<double> o{0.5};
  const std::vector<double> bad{0.2, 0.1};
  CHECK_THROWS_AS(success_curve(o, bad), Error);
  const std::vector<double> outside{0.5, 1.5};
  CHECK_THROWS_AS(success_curve(o, outside), Error);
}

TEST_CASE("attribute report averages the tagged sequences") {
  SequenceEval a, b, c;
  a.name = "a";
  a.curve.auc = 0.4;
  a.overlaps = {0.4};
  b.name = "b";
  b.curve.auc = 0.6;
  b.overlaps = {0.6};
  c.name = "c";
  c.curve.auc = 0.9;
  c.overlaps = {0.9};
  const std::vector<SequenceEval> seqs{a, b, c};
  const std::map<std::string, std::vector<std::string>> tags{{"a", {"SV", "IV"}}, {"b", {"SV"}}, {"c", {}}};
  const AttributeReport r = attribute_report(seqs, tags);
  CHECK(r.attributes.at(AttributeTag::SV).auc == doctest::Approx(0.5));
  CHECK(r.attributes.at(AttributeTag::SV).sequences == 2);
  CHECK(r.attributes.at(AttributeTag::IV).auc == doctest::Approx(0.4));
  CHECK_FALSE(r.attributes.at(AttributeTag::OCC).auc.has_value());
  CHECK(r.overall_auc == doctest::Approx(1.9 / 3.0));
  CHECK(r.mean_overlap == doctest::Approx(1.9 / 3.0));

  const std::map<std::string, std::vector<std::string>> unknown{{"a", {"XYZ"}}};
  CHECK_THROWS_AS(attribute_report(seqs, unknown), Error);

  const auto j = report_json(seqs, r);
  CHECK(j["attributes"].size() == 2);
  CHECK(j["attributes"].contains("SV"));
  CHECK_FALSE(j["attributes"].contains("OCC"));
  CHECK(j["sequences"].size() == 3);
}

TEST_CASE("single tagged sequence reports its own auc") {
  const std::vector<BBox> gt{BBox::from_corner(0, 0, 10, 10), BBox::from_corner(1, 1, 10, 10)};
  const std::vector<BBox> pred{BBox::from_corner(2, 0, 10, 10), BBox::from_corner(1, 1, 10, 10)};
  const SequenceEval e = evaluate_sequence("s", pred, gt, {AttributeTag::OCC}, default_threshold_grid());
  const std::vector<SequenceEval> one{e};
  CHECK(attribute_report(one).attributes.at(AttributeTag::OCC).auc == e.curve.auc);
}

TEST_CASE("csv has one row per threshold") {
  const std::vector<double> o{0.3, 0.7};
  SequenceEval e;
  e.curve = success_curve(o, default_threshold_grid());
  const std::vector<SequenceEval> one{e};
  const std::string csv = curve_csv(mean_curve(one));
  CHECK(std::count(csv.begin(), csv.end(), '\n') == 22);
  CHECK(csv.rfind("threshold,ratio\n", 0) == 0);
  CHECK(csv.find("\n0.50,0.500000\n") != std::string::npos);
}
