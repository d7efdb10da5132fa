#include <cmath>
#include <map>

#include "doctest.h"
#include "ssg/error.hpp"
#include "ssg/metrics.hpp"
#include "ssg/random.hpp"

using namespace ssg;
using ad::Matrix;

namespace {

LabeledGraph nodes_only(std::vector<std::size_t> pred, std::vector<std::optional<int>> gt) {
  LabeledGraph g;
  g.node_pred = std::move(pred);
  g.node_gt = std::move(gt);
  return g;
}

}  // namespace

TEST_CASE("object recall") {
  SUBCASE("all correct") {
    const std::vector<LabeledGraph> g{nodes_only({0, 1, 2}, {0, 1, 2})};
    const auto r = eval_objects(g, 3);
    CHECK(r.recall == 1.0);
    CHECK(r.mrecall == 1.0);
  }
  SUBCASE("hand count") {
    // Class 0: 3 of 4 right, class 1: 0 of 1.
    const std::vector<LabeledGraph> g{nodes_only({0, 0, 0, 1, 0}, {0, 0, 0, 0, 1})};
    const auto r = eval_objects(g, 2);
    CHECK(r.recall == doctest::Approx(0.6).epsilon(1e-15));
    CHECK(r.mrecall == doctest::Approx(0.375).epsilon(1e-15));
  }
  SUBCASE("absent classes leave the mean") {
    const std::vector<LabeledGraph> g{nodes_only({0, 3, 1}, {0, 3, 3})};
    const auto r = eval_objects(g, 5);
    CHECK(r.mrecall == doctest::Approx(0.75).epsilon(1e-15));
    CHECK(r.per_class[2].total == 0);
  }
  SUBCASE("unlabeled nodes are skipped and an unlabeled graph fails") {
    const std::vector<LabeledGraph> g{nodes_only({0, 1}, {std::nullopt, 1})};
    CHECK(eval_objects(g, 2).total == 1);
    const std::vector<LabeledGraph> none{nodes_only({0}, {std::nullopt})};
    CHECK_THROWS_AS(eval_objects(none, 2), ValidationError);
  }
}

TEST_CASE("predicate recall") {
  LabeledGraph g = nodes_only({0, 0, 0}, {0, 0, 0});
  g.edges = {{0, 1}, {1, 2}, {2, 0}, {0, 2}, {1, 0}};
  g.edge_gt = {1, 1, 1, 0, 0};
  g.edge_pred = {1, 0, 1, 0, 1};
  const std::vector<LabeledGraph> gs{g};
  const auto all = eval_predicates(gs, 2, false);
  CHECK(all.recall == doctest::Approx(0.6).epsilon(1e-15));
  CHECK(all.mrecall == doctest::Approx((0.5 + 2.0 / 3.0) / 2.0).epsilon(1e-15));
  const auto nonnone = eval_predicates(gs, 2, true);
  CHECK(nonnone.recall == doctest::Approx(2.0 / 3.0).epsilon(1e-15));
  CHECK(nonnone.mrecall == doctest::Approx(2.0 / 3.0).epsilon(1e-15));

  LabeledGraph allnone = g;
  allnone.edge_gt = {0, 0, 0, 0, 0};
  const std::vector<LabeledGraph> an{allnone};
  CHECK_THROWS_AS(eval_predicates(an, 2, true), ValidationError);
  CHECK_THROWS_AS(eval_triplets(an, true), ValidationError);

  LabeledGraph nonzero = g;
  nonzero.edge_gt = {1, 2, 1, 2, 1};
  const std::vector<LabeledGraph> nz{nonzero};
  const auto off = eval_predicates(nz, 3, false);
  const auto on = eval_predicates(nz, 3, true);
  CHECK(off.recall == on.recall);
  CHECK(off.mrecall == on.mrecall);
}

TEST_CASE("triplet recall") {
  LabeledGraph g = nodes_only({0, 1, 1}, {0, 1, 2});
  g.edges = {{0, 1}, {1, 0}, {0, 2}, {2, 1}};
  g.edge_gt = {1, 2, 1, 0};
  g.edge_pred = {1, 2, 1, 0};
  const std::vector<LabeledGraph> gs{g};
  // Node 2 is wrong, so only the first two triplets hold.
  CHECK(eval_triplets(gs, false).recall == doctest::Approx(0.5).epsilon(1e-15));
  CHECK(eval_triplets(gs, true).recall == doctest::Approx(2.0 / 3.0).epsilon(1e-15));

  LabeledGraph right = g;
  right.node_pred = {0, 1, 2};
  const std::vector<LabeledGraph> rs{right};
  CHECK(eval_triplets(rs, false).recall == 1.0);

  LabeledGraph wrong_subject = right;
  wrong_subject.node_pred = {1, 1, 2};
  wrong_subject.edges = {{0, 1}};
  wrong_subject.edge_gt = {1};
  wrong_subject.edge_pred = {1};
  const std::vector<LabeledGraph> ws{wrong_subject};
  CHECK(eval_triplets(ws, false).recall == 0.0);
  CHECK(eval_predicates(ws, 3, false).recall == 1.0);
}

TEST_CASE("recall is the count-weighted mean of per-class recalls") {
  Rng rng(1);
  std::vector<LabeledGraph> gs;
  for (int k = 0; k < 10; ++k) {
    LabeledGraph g;
    for (int i = 0; i < 8; ++i) {
      g.node_gt.push_back(static_cast<int>(rng.index(5)));
      g.node_pred.push_back(rng.index(5));
    }
    gs.push_back(g);
  }
  const auto r = eval_objects(gs, 5);
  double weighted = 0;
  for (const auto& c : r.per_class) weighted += c.recall() * static_cast<double>(c.total);
  CHECK(weighted / static_cast<double>(r.total) == doctest::Approx(r.recall).epsilon(1e-14));
}

TEST_CASE("quartiles use linear interpolation") {
  const auto q = quartiles({5, 1, 4, 2, 3});
  CHECK(q.q1 == 2.0);
  CHECK(q.median == 3.0);
  CHECK(q.q3 == 4.0);
  const auto even = quartiles({1, 2, 3, 4});
  CHECK(even.q1 == 1.75);
  CHECK(even.median == 2.5);
  CHECK(even.q3 == 3.25);
  CHECK(quartiles({}).count == 0);
}

TEST_CASE("calibration histogram") {
  SUBCASE("all confident and correct") {
    Matrix p(4, 2);
    for (std::size_t i = 0; i < 4; ++i) {
      p(i, 0) = 0.95;
      p(i, 1) = 0.05;
    }
    const std::vector<std::size_t> gt(4, 0);
    const auto r = calibration_report(p, p, gt);
    CHECK(r.bins[9].count == 4);
    CHECK(r.bins[9].accuracy() == 1.0);
    for (std::size_t b = 0; b < 9; ++b) CHECK(r.bins[b].count == 0);
    CHECK(r.low_confidence_count == 0);
  }
  SUBCASE("six hand-binned instances") {
    const Matrix p(6, 3, std::vector<double>{0.35, 0.33, 0.32,   //
                                             0.5, 0.25, 0.25,    //
                                             0.1, 0.55, 0.35,    //
                                             0.05, 0.05, 0.9,    //
                                             1.0, 0.0, 0.0,      //
                                             0.45, 0.44, 0.11});
    const std::vector<std::size_t> gt{0, 1, 1, 2, 1, 1};
    const auto r = calibration_report(p, p, gt);
    CHECK(r.bins[3].count == 1);
    CHECK(r.bins[3].correct == 1);
    CHECK(r.bins[4].count == 1);
    CHECK(r.bins[4].correct == 0);
    CHECK(r.bins[5].count == 2);
    CHECK(r.bins[5].correct == 1);
    CHECK(r.bins[9].count == 2);
    CHECK(r.bins[9].correct == 1);
    std::size_t total = 0;
    for (const auto& b : r.bins) total += b.count;
    CHECK(total == 6);
    // Base confidence below one half: rows 0 and 5.
    CHECK(r.low_confidence_count == 2);
    CHECK(r.low_confidence_mean_before == doctest::Approx((0.35 + 0.44) / 2).epsilon(1e-15));
  }
}

TEST_CASE("evaluate reports the five headline numbers") {
  LabeledGraph g = nodes_only({0, 1, 1}, {0, 1, 2});
  g.edges = {{0, 1}, {1, 2}};
  g.edge_gt = {1, 0};
  g.edge_pred = {1, 1};
  const std::vector<LabeledGraph> gs{g};
  const auto r = evaluate(gs, 3, 2, false);
  CHECK(r.recall_obj == doctest::Approx(2.0 / 3.0).epsilon(1e-15));
  CHECK(r.mrecall_obj == doctest::Approx(2.0 / 3.0).epsilon(1e-15));
  CHECK(r.recall_pred == 0.5);
  CHECK(r.mrecall_pred == 0.5);
  CHECK(r.recall_rel == 0.5);
  const auto json = to_json(r);
  for (const char* key : {"recall_rel", "recall_obj", "recall_pred", "mrecall_obj", "mrecall_pred"})
    CHECK(json.find(key) != std::string::npos);
  CHECK(format_table(r).find("66.7") != std::string::npos);
}
