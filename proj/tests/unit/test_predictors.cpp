#include <cmath>
#include <fstream>

#include "doctest.h"
#include "helpers.hpp"
#include "ssg/error.hpp"
#include "ssg/predictors.hpp"
#include "ssg/random.hpp"
#include "ssg/synthetic.hpp"

using namespace ssg;
using ad::Matrix;
using ad::Tape;
using ad::Value;

namespace {

ModelConfig tiny_model(std::size_t classes, std::size_t predicates, std::size_t dim, std::size_t h = 4) {
  ModelConfig c;
  c.feature_dim = dim;
  c.classes = classes;
  c.predicates = predicates;
  c.hidden = h;
  c.layers = 2;
  c.point_widths = {8, 8};
  c.max_points = 32;
  return c;
}

GeneratedCorpus small_corpus(std::uint64_t seed, std::size_t train = 20) {
  GenConfig g;
  g.seed = seed;
  g.train_scenes = train;
  g.val_scenes = 5;
  g.test_scenes = 1;
  g.feature_dim = 16;
  g.min_points = 16;
  g.max_points = 32;
  g.min_nodes = 4;
  g.max_nodes = 10;
  g.edge_radius = 2.0;
  g.prototype_scale = 1.0;
  g.contexts = 3;
  g.context_purity = 0.8;
  return gen_corpus(g);
}

std::vector<double> row_of(const Value& v, std::size_t r) {
  std::vector<double> out;
  for (std::size_t k = 0; k < v.cols(); ++k) out.push_back(v(r, k));
  return out;
}

double loop_ce(const std::vector<double>& z, std::size_t t) {
  double mx = z[0];
  for (double x : z) mx = std::max(mx, x);
  double s = 0;
  for (double x : z) s += std::exp(x - mx);
  return -(z[t] - mx - std::log(s));
}

}  // namespace

TEST_CASE("zero heads give uniform predictions") {
  const auto cfg = tiny_model(5, 3, 2);
  const auto params = zero_params(cfg);
  auto scene = testing::tiny_scene(3, 2);
  scene.classes = {"a", "b", "c", "d", "e"};
  scene.predicates = {"none", "x", "y"};
  scene.edges = {{"n0", "n1", 0}};
  const auto logits = infer_logits(params, cfg, prepare_scene(scene, cfg));
  CHECK(logits.nodes == Matrix(3, 5));
  CHECK(logits.edges == Matrix(1, 3));
}

TEST_CASE("heads match a loop oracle") {
  Rng rng(1);
  const auto cfg = tiny_model(3, 2, 2);
  auto params = init_params(cfg, 2);
  for (auto& l : params.predictors.node_head.layers)
    for (auto& x : l.bias.data) x = rng.uniform(-1, 1);
  Tape t;
  const auto b = bind(params, t, false);
  Matrix state(1, 4);
  for (auto& x : state.data) x = rng.uniform(-1, 1);
  GraphState gs{t.constant(state), t.constant(Matrix(0, 4))};
  const auto out = predict_logits(gs, b.predictors);
  const auto& h = params.predictors.node_head;
  std::vector<double> hid(4);
  for (std::size_t j = 0; j < 4; ++j) {
    double s = h.layers[0].bias(0, j);
    for (std::size_t i = 0; i < 4; ++i) s += state(0, i) * h.layers[0].weight(i, j);
    hid[j] = std::max(0.0, s);
  }
  for (std::size_t c = 0; c < 3; ++c) {
    double s = h.layers[1].bias(0, c);
    for (std::size_t j = 0; j < 4; ++j) s += hid[j] * h.layers[1].weight(j, c);
    CHECK(out.nodes(0, c) == doctest::Approx(s).epsilon(1e-13));
  }
}

TEST_CASE("logits follow node reordering") {
  const auto gen = small_corpus(3, 2);
  const auto& scene = gen.train.scenes[0];
  const auto cfg = tiny_model(10, 5, 16, 8);
  const auto params = init_params(cfg, 5);
  const auto base = infer_logits(params, cfg, prepare_scene(scene, cfg));
  auto rev = scene;
  std::reverse(rev.nodes.begin(), rev.nodes.end());
  const auto out = infer_logits(params, cfg, prepare_scene(rev, cfg));
  const std::size_t m = scene.nodes.size();
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t c = 0; c < 10; ++c)
      CHECK(out.nodes(m - 1 - i, c) == doctest::Approx(base.nodes(i, c)).epsilon(1e-12));
  for (std::size_t k = 0; k < base.edges.data.size(); ++k)
    CHECK(out.edges.data[k] == doctest::Approx(base.edges.data[k]).epsilon(1e-12));
}

TEST_CASE("loss values") {
  Tape t;
  SUBCASE("huge aligned logits give zero loss") {
    Matrix z(2, 3, -500.0);
    z(0, 1) = 500.0;
    z(1, 2) = 500.0;
    Matrix e(1, 2, -500.0);
    e(0, 0) = 500.0;
    const std::vector<int> nt{1, 2}, et{0};
    const auto l = loss({t.constant(z), t.constant(e)}, nt, et);
    CHECK(l.item() < 1e-12);
  }
  SUBCASE("uniform logits over twenty classes") {
    const std::vector<int> nt{7, 3, 19}, et{};
    const auto l = loss({t.constant(Matrix(3, 20)), t.constant(Matrix(0, 4))}, nt, et);
    CHECK(l.item() == doctest::Approx(std::log(20.0)).epsilon(1e-14));
    CHECK(std::log(20.0) == doctest::Approx(2.9957).epsilon(1e-4));
  }
  SUBCASE("random case against a scalar reference") {
    Rng rng(4);
    Matrix z(5, 4), e(6, 3);
    for (auto& x : z.data) x = rng.uniform(-3, 3);
    for (auto& x : e.data) x = rng.uniform(-3, 3);
    const std::vector<int> nt{0, -1, 3, 2, 1}, et{2, 0, -1, 1, 1, 0};
    LossWeights w;
    w.lambda_pred = 0.7;
    const auto zv = t.constant(z), ev = t.constant(e);
    const auto l = loss({zv, ev}, nt, et, w);
    double node = 0, edge = 0;
    for (std::size_t i = 0; i < 5; ++i)
      if (nt[i] >= 0) node += loop_ce(row_of(zv, i), static_cast<std::size_t>(nt[i]));
    for (std::size_t i = 0; i < 6; ++i)
      if (et[i] >= 0) edge += loop_ce(row_of(ev, i), static_cast<std::size_t>(et[i]));
    CHECK(l.item() == doctest::Approx(node / 4.0 + 0.7 * edge / 5.0).epsilon(1e-13));
  }
  SUBCASE("out-of-range label") {
    const std::vector<int> nt{4}, et{};
    CHECK_THROWS_AS(loss({t.constant(Matrix(1, 4)), t.constant(Matrix(0, 2))}, nt, et), ValidationError);
  }
}

TEST_CASE("shifting every logit leaves the loss gradient unchanged") {
  Rng rng(5);
  Matrix z(3, 4);
  for (auto& x : z.data) x = rng.uniform(-2, 2);
  const std::vector<int> targets{1, 0, 3};
  auto grad = [&](double shift) {
    Tape t;
    auto p = t.parameter(z);
    auto shifted = ad::add(p, t.constant(Matrix(1, 1, std::vector<double>{shift})));
    auto l = ad::cross_entropy_rows(shifted, targets);
    t.backward(l);
    return std::make_pair(l.item(), std::vector<double>(p.grad().begin(), p.grad().end()));
  };
  const auto [l0, g0] = grad(0.0);
  const auto [l1, g1] = grad(17.5);
  CHECK(l1 == doctest::Approx(l0).epsilon(1e-12));
  for (std::size_t i = 0; i < g0.size(); ++i) CHECK(g1[i] == doctest::Approx(g0[i]).epsilon(1e-10));
}

TEST_CASE("a zero step leaves the parameters bit-identical") {
  const auto cfg = tiny_model(3, 2, 2);
  auto params = init_params(cfg, 9);
  const auto before = params;
  TrainConfig tc;
  tc.step_size = 0.0;
  Adam opt(tc, scalar_count(params));
  std::vector<double> g(scalar_count(params), 0.3);
  opt.step(params, g);
  bool same = true;
  std::vector<Matrix> a, b;
  visit_params(params, [&](const std::string&, const Matrix& m) { a.push_back(m); });
  visit_params(before, [&](const std::string&, const Matrix& m) { b.push_back(m); });
  for (std::size_t i = 0; i < a.size(); ++i) same = same && a[i] == b[i];
  CHECK(same);
  CHECK_THROWS_AS(opt.step(params, std::vector<double>(3)), ShapeError);
}

TEST_CASE("training config validation") {
  TrainConfig tc;
  CHECK_NOTHROW(validate(tc));
  tc.batch_size = 0;
  CHECK_THROWS_AS(validate(tc), ConfigError);
  tc = {};
  tc.step_size = -1;
  CHECK_THROWS_AS(validate(tc), ConfigError);
  tc.step_size = 0;
  CHECK_THROWS_AS(validate(tc), ConfigError);
  tc = {};
  tc.patience = 0;
  CHECK_THROWS_AS(validate(tc), ConfigError);
}

TEST_CASE("training halves the loss within 30 epochs on 20 scenes") {
  for (std::uint64_t seed = 1; seed <= 5; ++seed) {
    CAPTURE(seed);
    const auto gen = small_corpus(seed);
    const auto cfg = tiny_model(10, 5, 16, 16);
    TrainConfig tc;
    tc.seed = seed;
    tc.max_epochs = 30;
    tc.patience = 30;
    tc.step_size = 3e-3;
    const auto res = train(gen.train, gen.val, cfg, tc);
    REQUIRE(res.history.size() == 30);
    double best = res.history.front().train_loss;
    for (const auto& h : res.history) best = std::min(best, h.train_loss);
    CHECK(best <= 0.5 * res.history.front().train_loss);
  }
}

TEST_CASE("a single scene is overfit") {
  const auto gen = small_corpus(7, 1);
  Corpus one = gen.train;
  const auto cfg = tiny_model(10, 5, 16, 16);
  TrainConfig tc;
  tc.seed = 7;
  tc.max_epochs = 200;
  tc.patience = 200;
  tc.step_size = 1e-2;
  tc.batch_size = 1;
  const auto res = train(one, one, cfg, tc);
  const auto prepared = prepare_scene(one.scenes[0], cfg);
  const auto logits = infer_logits(res.checkpoint.params, cfg, prepared);
  for (std::size_t i = 0; i < prepared.node_targets.size(); ++i) {
    std::size_t arg = 0;
    for (std::size_t c = 1; c < 10; ++c)
      if (logits.nodes(i, c) > logits.nodes(i, arg)) arg = c;
    CHECK(static_cast<int>(arg) == prepared.node_targets[i]);
  }
}

TEST_CASE("training is deterministic and checkpoints round-trip") {
  const auto gen = small_corpus(11, 6);
  const auto cfg = tiny_model(10, 5, 16, 8);
  TrainConfig tc;
  tc.seed = 3;
  tc.max_epochs = 4;
  tc.batch_size = 2;
  tc.threads = 2;
  const auto a = train(gen.train, gen.val, cfg, tc);
  tc.threads = 1;
  const auto b = train(gen.train, gen.val, cfg, tc);
  CHECK(a.history == b.history);
  const auto c = train(gen.train, gen.val, cfg, tc);

  testing::TempDir dir;
  save_checkpoint(a.checkpoint, dir / "a.ckpt");
  save_checkpoint(b.checkpoint, dir / "b.ckpt");
  save_checkpoint(c.checkpoint, dir / "c.ckpt");
  std::ifstream fa(dir / "b.ckpt", std::ios::binary), fb(dir / "c.ckpt", std::ios::binary);
  const std::string sa((std::istreambuf_iterator<char>(fa)), {}), sb((std::istreambuf_iterator<char>(fb)), {});
  CHECK(sa == sb);

  std::vector<Matrix> pa, pb;
  visit_params(a.checkpoint.params, [&](const std::string&, const Matrix& m) { pa.push_back(m); });
  visit_params(b.checkpoint.params, [&](const std::string&, const Matrix& m) { pb.push_back(m); });
  CHECK(pa == pb);

  const auto back = load_checkpoint(dir / "a.ckpt");
  CHECK(back.model == a.checkpoint.model);
  CHECK(back.train == a.checkpoint.train);
  CHECK(back.best_epoch == a.checkpoint.best_epoch);
  std::vector<Matrix> x, y;
  visit_params(back.params, [&](const std::string&, const Matrix& m) { x.push_back(m); });
  visit_params(a.checkpoint.params, [&](const std::string&, const Matrix& m) { y.push_back(m); });
  CHECK(x == y);

  std::ofstream(dir / "cut.ckpt", std::ios::binary) << sa.substr(0, sa.size() - 5);
  CHECK_THROWS_AS(load_checkpoint(dir / "cut.ckpt"), FormatError);
  std::ofstream(dir / "long.ckpt", std::ios::binary) << sa << "xyz";
  CHECK_THROWS_AS(load_checkpoint(dir / "long.ckpt"), FormatError);
}

TEST_CASE("rescoring in training keeps parameter shapes") {
  const auto gen = small_corpus(13, 4);
  const auto cfg = tiny_model(10, 5, 16, 8);
  const auto stats = compute_stats(gen.train);
  TrainConfig tc;
  tc.max_epochs = 2;
  tc.cr_in_training = true;
  CHECK_THROWS_AS(train(gen.train, gen.val, cfg, tc), ConfigError);
  const auto with = train(gen.train, gen.val, cfg, tc, &stats);
  tc.cr_in_training = false;
  const auto without = train(gen.train, gen.val, cfg, tc);
  std::vector<std::pair<std::size_t, std::size_t>> sa, sb;
  visit_params(with.checkpoint.params, [&](const std::string&, const Matrix& m) { sa.emplace_back(m.rows, m.cols); });
  visit_params(without.checkpoint.params, [&](const std::string&, const Matrix& m) { sb.emplace_back(m.rows, m.cols); });
  CHECK(sa == sb);
}

TEST_CASE("prepare_scene checks the model vocabulary") {
  const auto scene = testing::tiny_scene(2, 2);
  CHECK_THROWS_AS(prepare_scene(scene, tiny_model(3, 2, 2)), ValidationError);
  CHECK_THROWS_AS(prepare_scene(scene, tiny_model(2, 2, 5)), ValidationError);
  CHECK_NOTHROW(prepare_scene(scene, tiny_model(2, 2, 2)));
}
