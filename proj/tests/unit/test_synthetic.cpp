#include <cmath>
#include <fstream>
#include <map>

#include "doctest.h"
#include "helpers.hpp"
#include "ssg/error.hpp"
#include "ssg/rescore.hpp"
#include "ssg/synthetic.hpp"

using namespace ssg;
namespace fs = std::filesystem;

namespace {

GenConfig small(std::uint64_t seed) {
  GenConfig g;
  g.seed = seed;
  g.train_scenes = 10;
  g.val_scenes = 3;
  g.test_scenes = 3;
  g.min_points = 8;
  g.max_points = 16;
  return g;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), {}};
}

}  // namespace

TEST_CASE("noiseless views equal the normalized prototype") {
  auto g = small(1);
  g.beta_max = 0.0;
  g.feature_noise = 0.0;
  const auto gen = gen_corpus(g);
  const auto& P = gen.model.prototypes;
  for (const auto& s : gen.train.scenes)
    for (const auto& n : s.nodes) {
      const auto c = static_cast<std::size_t>(*n.gt_class);
      double norm = 0;
      for (std::size_t d = 0; d < P.cols; ++d) norm += P(c, d) * P(c, d);
      norm = std::sqrt(norm);
      for (const auto& vf : n.view_features)
        for (std::size_t d = 0; d < P.cols; ++d) REQUIRE(vf.feature[d] == static_cast<float>(P(c, d) / norm));
    }
}

TEST_CASE("fixed seed gives byte-identical corpora") {
  testing::TempDir dir;
  auto g = small(5);
  g.threads = 2;
  save_generated(gen_corpus(g), dir.path / "a");
  g.threads = 1;
  save_generated(gen_corpus(g), dir.path / "b");
  std::size_t files = 0;
  for (const auto& e : fs::recursive_directory_iterator(dir.path / "a")) {
    if (!e.is_regular_file()) continue;
    const auto rel = fs::relative(e.path(), dir.path / "a");
    CHECK(slurp(e.path()) == slurp(dir.path / "b" / rel));
    ++files;
  }
  CHECK(files > 30);
  CHECK(load_model(dir.path / "a" / "model.json") == gen_corpus(small(5)).model);

  auto other = small(6);
  CHECK_FALSE(gen_corpus(other).train == gen_corpus(small(5)).train);
}

TEST_CASE("empirical class frequencies match the mixture") {
  auto g = small(2);
  g.train_scenes = 500;
  g.val_scenes = 0;
  g.test_scenes = 0;
  g.min_points = 4;
  g.max_points = 4;
  g.feature_dim = 4;
  const auto gen = gen_corpus(g);
  std::vector<double> counts(g.classes, 0.0);
  double total = 0;
  for (const auto& s : gen.train.scenes)
    for (const auto& n : s.nodes) {
      counts[static_cast<std::size_t>(*n.gt_class)] += 1;
      total += 1;
    }
  const auto marginal = gen.model.class_marginal();
  for (std::size_t c = 0; c < g.classes; ++c) CHECK(std::abs(counts[c] / total - marginal[c]) < 0.02);
}

TEST_CASE("statistics recover the predicate table") {
  auto g = small(3);
  g.classes = 3;
  g.contexts = 3;
  g.train_scenes = 400;
  g.val_scenes = 0;
  g.test_scenes = 0;
  g.min_nodes = 8;
  g.max_nodes = 12;
  g.feature_dim = 4;
  g.min_points = 4;
  g.max_points = 4;
  const auto gen = gen_corpus(g);
  const auto st = compute_stats(gen.train);
  std::map<std::pair<std::size_t, std::size_t>, std::vector<double>> counts;
  std::size_t edges = 0;
  for (const auto& t : st.triplets) {
    auto& v = counts[{t.subject, t.object}];
    v.resize(g.predicates, 0.0);
    v[t.predicate] += static_cast<double>(t.count);
    edges += static_cast<std::size_t>(t.count);
  }
  REQUIRE(edges >= 5000);
  for (const auto& [key, v] : counts) {
    double n = 0;
    for (double x : v) n += x;
    const std::size_t row = key.first * g.classes + key.second;
    for (std::size_t p = 0; p < g.predicates; ++p)
      CHECK(std::abs(v[p] / n - gen.model.predicate_table(row, p)) < 0.05);
  }
}

TEST_CASE("mask contamination is no larger than box contamination") {
  GenConfig mask = small(4), box = small(4);
  box.contamination = Contamination::bbox;
  Rng a(9), b(9);
  double sm = 0, sb = 0;
  for (int i = 0; i < 2000; ++i) {
    const double bm = draw_contamination(a, mask);
    const double bb = draw_contamination(b, box);
    CHECK(bm <= bb);
    sm += bm;
    sb += bb;
  }
  CHECK(sm <= sb);
  CHECK(sm == doctest::Approx(0.2 * sb).epsilon(1e-9));
}

TEST_CASE("bayes reference") {
  auto clean = small(8);
  clean.beta_max = 0.0;
  clean.feature_noise = 0.0;
  const auto gc = gen_corpus(clean);
  CHECK(bayes_reference(gc.test, gc.model).recall_obj == 1.0);

  auto dirty = small(8);
  dirty.contamination = Contamination::bbox;
  dirty.beta_max = 0.9;
  dirty.feature_noise = 0.3;
  dirty.test_scenes = 20;
  const auto gd = gen_corpus(dirty);
  CHECK(bayes_reference(gd.test, gd.model).recall_obj < 1.0);
}

TEST_CASE("bayes reference on a hand-built two-class model") {
  GroundTruthModel m;
  m.classes = {"a", "b"};
  m.predicates = {"none", "on"};
  m.prototypes = ad::Matrix(2, 2, std::vector<double>{2, 0, 0, 1});
  m.background = {0, 0};
  m.class_dims = ad::Matrix(2, 3, 1.0);
  m.contexts = ad::Matrix(1, 2, std::vector<double>{0.5, 0.5});
  m.context_weights = {1.0};
  // a->a none, a->b on, b->a on, b->b none.
  m.predicate_table = ad::Matrix(4, 2, std::vector<double>{0.9, 0.1, 0.2, 0.8, 0.3, 0.7, 0.6, 0.4});
  auto s = testing::tiny_scene(3, 2);
  s.classes = m.classes;
  s.predicates = m.predicates;
  s.nodes[0].view_features[0].feature = {0.9f, 0.3f};  // nearest a
  s.nodes[1].view_features[0].feature = {0.6f, 0.8f};  // nearest b
  s.nodes[2].view_features[0].feature = {0.6f, 0.75f};  // nearest b
  s.nodes[0].gt_class = 0;
  s.nodes[1].gt_class = 1;
  s.nodes[2].gt_class = 0;
  s.edges = {{"n0", "n1", 1}, {"n2", "n1", 0}, {"n1", "n0", 1}};
  Corpus c{m.classes, m.predicates, 2, {s}};
  const auto r = bayes_reference(c, m);
  CHECK(r.objects.correct == 2);
  CHECK(r.objects.total == 3);
  // Edge predictions use true classes: on, on, on.
  CHECK(r.predicates.correct == 2);
  CHECK(r.triplets.correct == 2);
}

TEST_CASE("generator config validation") {
  auto g = small(1);
  CHECK_NOTHROW(validate(g));
  g.min_nodes = 1;
  CHECK_THROWS_AS(validate(g), ConfigError);
  g = small(1);
  g.beta_max = 1.5;
  CHECK_THROWS_AS(validate(g), ConfigError);
  g = small(1);
  g.table_mode = PredicateTable::given;
  CHECK_THROWS_AS(validate(g), ConfigError);
}

TEST_CASE("joint table depends on both endpoints") {
  auto g = small(1);
  g.table_mode = PredicateTable::joint;
  g.joint_noise = 0.0;
  const auto m = make_model(g);
  for (std::size_t s = 0; s < g.classes; ++s)
    for (std::size_t o = 0; o < g.classes; ++o) CHECK(m.predicate_table(s * g.classes + o, (s + o) % g.predicates) == 1.0);
}
