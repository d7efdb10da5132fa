#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <set>

#include "doctest.h"
#include "helpers.hpp"
#include "ssg/error.hpp"
#include "ssg/random.hpp"
#include "ssg/scene.hpp"
#include "ssg/synthetic.hpp"

using namespace ssg;
using testing::TempDir;
using testing::tiny_scene;

TEST_CASE("minimal one-node scene round-trips") {
  TempDir dir;
  const auto s = tiny_scene(1);
  save_scene(s, dir / "s.json");
  CHECK(std::filesystem::exists(dir / "s.bin"));
  const auto back = load_scene(dir / "s.json");
  CHECK(back.nodes.size() == 1);
  CHECK(back == s);
}

TEST_CASE("edge with an unknown endpoint is named in the error") {
  auto s = tiny_scene(2);
  s.edges.push_back({"n0", "ghost", 1});
  try {
    validate(s);
    FAIL("expected a validation error");
  } catch (const ValidationError& e) {
    CHECK(std::string(e.what()).find("n0->ghost") != std::string::npos);
  }

  // Same check on the load path.
  TempDir dir;
  auto ok = tiny_scene(2);
  save_scene(ok, dir / "s.json");
  std::ifstream in(dir / "s.json");
  std::string text((std::istreambuf_iterator<char>(in)), {});
  in.close();
  const auto pos = text.find("\"edges\": []");
  REQUIRE(pos != std::string::npos);
  text.replace(pos, 11, R"("edges": [{"src": "n0", "dst": "ghost", "gt_predicate": 1}])");
  std::ofstream(dir / "s.json") << text;
  CHECK_THROWS_AS(load_scene(dir / "s.json"), ValidationError);
}

TEST_CASE("scene invariants") {
  SUBCASE("self loop") {
    auto s = tiny_scene(2);
    s.edges.push_back({"n0", "n0", 0});
    CHECK_THROWS_AS(validate(s), ValidationError);
  }
  SUBCASE("duplicate directed pair") {
    auto s = tiny_scene(2);
    s.edges.push_back({"n0", "n1", 0});
    s.edges.push_back({"n0", "n1", 1});
    CHECK_THROWS_AS(validate(s), ValidationError);
  }
  SUBCASE("feature width mismatch") {
    auto s = tiny_scene(1);
    s.nodes[0].view_features[0].feature.push_back(1.f);
    CHECK_THROWS_AS(validate(s), ValidationError);
  }
  SUBCASE("unknown view") {
    auto s = tiny_scene(1);
    s.nodes[0].view_features[0].view_id = "v9";
    CHECK_THROWS_AS(validate(s), ValidationError);
  }
  SUBCASE("non-positive dims") {
    auto s = tiny_scene(1);
    s.nodes[0].bbox.dims[1] = 0.0;
    CHECK_THROWS_AS(validate(s), ValidationError);
  }
  SUBCASE("label out of range") {
    auto s = tiny_scene(1);
    s.nodes[0].gt_class = 2;
    CHECK_THROWS_AS(validate(s), ValidationError);
  }
  SUBCASE("predicate vocabulary starts with none") {
    auto s = tiny_scene(1);
    s.predicates = {"near", "none"};
    CHECK_THROWS_AS(validate(s), ValidationError);
  }
}

TEST_CASE("save refuses a non-finite feature entry") {
  TempDir dir;
  auto s = tiny_scene(1);
  s.nodes[0].view_features[0].feature[1] = std::numeric_limits<float>::quiet_NaN();
  CHECK_THROWS_AS(save_scene(s, dir / "s.json"), ValidationError);
  CHECK_FALSE(std::filesystem::exists(dir / "s.json"));
}

TEST_CASE("malformed JSON reports a line") {
  TempDir dir;
  std::ofstream(dir / "bad.json") << "{\n \"scene_id\": \"x\",\n oops\n}";
  try {
    load_scene(dir / "bad.json");
    FAIL("expected a format error");
  } catch (const FormatError& e) {
    CHECK(std::string(e.what()).find("bad.json:") != std::string::npos);
  }
}

TEST_CASE("empty-edge and 50-node scenes round-trip") {
  TempDir dir;
  auto s = build_proximity_edges(tiny_scene(50), 1.5);
  for (std::size_t i = 0; i < s.edges.size(); ++i) s.edges[i].gt_predicate = static_cast<int>(i % 2);
  save_scene(s, dir / "big.json");
  CHECK(load_scene(dir / "big.json") == s);
  const auto e = tiny_scene(3);
  save_scene(e, dir / "e.json");
  CHECK(load_scene(dir / "e.json") == e);
}

TEST_CASE("100 generated scenes round-trip bit-identically") {
  TempDir dir;
  GenConfig cfg;
  cfg.seed = 17;
  const auto model = make_model(cfg);
  for (std::size_t i = 0; i < 100; ++i) {
    const auto s = generate_scene(cfg, model, i, "scene_" + std::to_string(i));
    const auto path = dir / ("s" + std::to_string(i) + ".json");
    save_scene(s, path);
    const auto back = load_scene(path);
    REQUIRE(back == s);
  }
}

TEST_CASE("corpus round-trip and vocabulary check") {
  TempDir dir;
  Corpus c;
  c.classes = {"a", "b"};
  c.predicates = {"none", "near"};
  c.feature_dim = 2;
  c.scenes = {tiny_scene(2), tiny_scene(3)};
  c.scenes[1].scene_id = "other";
  save_corpus(c, dir.path / "corpus");
  CHECK(load_corpus(dir.path / "corpus") == c);
  c.scenes[1].classes = {"a", "c"};
  CHECK_THROWS_AS(validate(c), ValidationError);
}

TEST_CASE("proximity edges") {
  auto s = tiny_scene(2);
  s.nodes[1].bbox.centroid = {0.5, 0.0, 0.5};
  s.nodes[0].bbox.centroid = {0.0, 0.0, 0.5};
  auto near = build_proximity_edges(s, 1.0);
  REQUIRE(near.edges.size() == 2);
  CHECK(near.edges[0].src == "n0");
  CHECK(near.edges[0].dst == "n1");
  CHECK(near.edges[1].src == "n1");
  CHECK(near.edges[1].dst == "n0");

  s.nodes[1].bbox.centroid = {2.0, 0.0, 0.5};
  CHECK(build_proximity_edges(s, 1.0).edges.empty());
  CHECK_THROWS_AS(build_proximity_edges(s, 0.0), ConfigError);
}

TEST_CASE("proximity edges equal the brute-force filter and are symmetric") {
  Rng rng(21);
  for (int trial = 0; trial < 20; ++trial) {
    auto s = tiny_scene(10);
    for (auto& n : s.nodes) n.bbox.centroid = {rng.uniform(0, 3), rng.uniform(0, 3), rng.uniform(0, 1)};
    const auto out = build_proximity_edges(s, 1.5);
    std::set<std::pair<std::string, std::string>> got, want;
    for (const auto& e : out.edges) got.emplace(e.src, e.dst);
    for (const auto& a : s.nodes)
      for (const auto& b : s.nodes) {
        if (a.node_id == b.node_id) continue;
        double d2 = 0;
        for (int k = 0; k < 3; ++k) d2 += std::pow(a.bbox.centroid[k] - b.bbox.centroid[k], 2);
        if (std::sqrt(d2) <= 1.5) want.emplace(a.node_id, b.node_id);
      }
    CHECK(got == want);
    for (const auto& [a, b] : got) CHECK(got.count({b, a}) == 1);
  }
}

TEST_CASE("proximity edges keep existing labeled edges") {
  auto s = tiny_scene(2);
  s.nodes[1].bbox.centroid = {0.3, 0.0, 0.5};
  s.edges.push_back({"n1", "n0", 1});
  const auto out = build_proximity_edges(s, 1.0);
  REQUIRE(out.edges.size() == 2);
  const auto it = std::find_if(out.edges.begin(), out.edges.end(),
                               [](const EdgeInstance& e) { return e.src == "n1"; });
  REQUIRE(it != out.edges.end());
  CHECK(it->gt_predicate == 1);
}

namespace {

PointSet grid_points(float x0, int count) {
  PointSet p;
  for (int i = 0; i < count; ++i) p.push_back({x0 + 0.2f * static_cast<float>(i), 0.f, 0.f});
  return p;
}

}  // namespace

TEST_CASE("match_instances on identical sets is the identity") {
  std::vector<PointSet> gt{grid_points(0, 5), grid_points(10, 7), grid_points(20, 3)};
  const auto m = match_instances(gt, gt);
  REQUIRE(m.size() == 3);
  for (std::size_t i = 0; i < 3; ++i) CHECK(m[i] == i);
}

TEST_CASE("match_instances picks the larger overlap") {
  std::vector<PointSet> gt{grid_points(0, 10), grid_points(10, 10)};
  PointSet pred;
  for (int i = 0; i < 3; ++i) pred.push_back(gt[0][i]);
  for (int i = 0; i < 7; ++i) pred.push_back(gt[1][i]);
  std::vector<PointSet> preds{pred};
  const auto m = match_instances(preds, gt);
  CHECK(m[0] == 1);
}

TEST_CASE("match_instances equals the exhaustive assignment on perturbed segments") {
  Rng rng(4);
  for (int trial = 0; trial < 5; ++trial) {
    std::vector<PointSet> gt;
    for (int k = 0; k < 8; ++k) gt.push_back(grid_points(10.f * static_cast<float>(k), 20));
    // Each prediction keeps most of one segment and steals a few points from
    // the next one.
    std::vector<PointSet> pred(8);
    for (int k = 0; k < 8; ++k) {
      const int keep = 12 + static_cast<int>(rng.index(8));
      for (int i = 0; i < keep; ++i) pred[k].push_back(gt[k][i]);
      const int steal = static_cast<int>(rng.index(6));
      for (int i = 0; i < steal; ++i) pred[k].push_back(gt[(k + 1) % 8][19 - i]);
    }
    const auto counts = overlap_counts(pred, gt);
    std::vector<std::size_t> perm(8);
    for (std::size_t i = 0; i < 8; ++i) perm[i] = i;
    std::size_t best = 0;
    std::vector<std::size_t> best_perm;
    do {
      std::size_t total = 0;
      for (std::size_t i = 0; i < 8; ++i) total += counts[i][perm[i]];
      if (total > best) {
        best = total;
        best_perm = perm;
      }
    } while (std::next_permutation(perm.begin(), perm.end()));
    const auto m = match_instances(pred, gt);
    std::set<std::size_t> used;
    for (std::size_t i = 0; i < 8; ++i) {
      REQUIRE(m[i].has_value());
      CHECK(*m[i] == best_perm[i]);
      CHECK(used.insert(*m[i]).second);
    }
  }
}

TEST_CASE("match_instances never reuses a ground-truth segment") {
  std::vector<PointSet> gt{grid_points(0, 10)};
  std::vector<PointSet> pred{grid_points(0, 6), grid_points(1.2f, 4)};
  const auto m = match_instances(pred, gt);
  CHECK(m[0] == 0);
  CHECK_FALSE(m[1].has_value());
  std::vector<PointSet> far{grid_points(50, 3)};
  CHECK_FALSE(match_instances(far, gt)[0].has_value());
}
