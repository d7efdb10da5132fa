#include "ssg/synthetic.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <numeric>

#include "binary_io.hpp"
#include "json.hpp"
#include "ssg/error.hpp"
#include "ssg/feature_init.hpp"
#include "ssg/parallel.hpp"

namespace ssg {

using nlohmann::json;

namespace {

constexpr std::uint64_t kModelStream = 0xFFFFFFFFFFFFFFFFull;

void require(bool ok, const std::string& what) {
  if (!ok) throw ConfigError("generator config: " + what);
}

std::string numbered(const char* prefix, std::size_t i, int width) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%s%0*zu", prefix, width, i);
  return buf;
}

std::vector<double> normalized(std::vector<double> v) {
  double n = 0.0;
  for (double x : v) n += x * x;
  n = std::sqrt(n);
  if (n > 0.0)
    for (double& x : v) x /= n;
  return v;
}

std::vector<double> random_direction(Rng& rng, std::size_t d, double norm) {
  std::vector<double> v(d);
  for (auto& x : v) x = rng.normal();
  v = normalized(std::move(v));
  for (auto& x : v) x *= norm;
  return v;
}

}  // namespace

void validate(const GenConfig& c) {
  require(c.classes >= 2, "classes must be >= 2");
  require(c.predicates >= 2, "predicates must be >= 2 (\"none\" plus at least one)");
  require(c.feature_dim >= 1, "feature_dim must be >= 1");
  require(c.min_nodes >= 2, "min_nodes must be >= 2");
  require(c.max_nodes >= c.min_nodes, "max_nodes must be >= min_nodes");
  require(c.edge_radius > 0.0, "edge_radius must be positive");
  require(c.room_size > 0.0, "room_size must be positive");
  require(c.prototype_scale > 0.0 && std::isfinite(c.prototype_scale), "prototype_scale must be positive");
  require(c.sibling_similarity >= 0.0 && c.sibling_similarity < 1.0, "sibling_similarity must lie in [0, 1)");
  require(c.sibling_pairs <= c.classes / 2, "sibling_pairs exceeds the number of class pairs");
  require(c.feature_noise >= 0.0 && std::isfinite(c.feature_noise), "feature_noise must be >= 0");
  require(c.beta_max >= 0.0 && c.beta_max <= 1.0, "beta_max must lie in [0, 1]");
  require(c.mask_quality >= 0.0 && c.mask_quality <= 1.0, "mask_quality must lie in [0, 1]");
  require(c.predicate_concentration > 0.0, "predicate_concentration must be positive");
  require(c.joint_noise >= 0.0 && c.joint_noise <= 1.0, "joint_noise must lie in [0, 1]");
  require(c.contexts >= 1, "contexts must be >= 1");
  require(c.context_concentration > 0.0 || c.contexts <= c.classes, "block contexts require contexts <= classes");
  require(c.context_concentration >= 0.0 && std::isfinite(c.context_concentration),
          "context_concentration must be >= 0");
  require(c.context_skew >= 0.0 && std::isfinite(c.context_skew), "context_skew must be >= 0");
  require(c.context_purity >= 0.0 && c.context_purity <= 1.0, "context_purity must lie in [0, 1]");
  require(c.size_jitter >= 0.0 && c.size_jitter < 1.0, "size_jitter must lie in [0, 1)");
  require(c.min_points >= 1 && c.max_points >= c.min_points, "point count range is empty");
  require(c.min_views >= 1 && c.max_views >= c.min_views, "view count range is empty");
  require(c.scene_views >= c.max_views, "scene_views must be >= max_views");
  if (c.table_mode == PredicateTable::given) {
    require(c.table.size() == c.classes * c.classes * c.predicates, "table must have C*C*P entries");
    for (std::size_t r = 0; r < c.classes * c.classes; ++r) {
      double s = 0.0;
      for (std::size_t p = 0; p < c.predicates; ++p) {
        const double x = c.table[r * c.predicates + p];
        require(x >= 0.0 && std::isfinite(x), "table entries must be non-negative");
        s += x;
      }
      require(std::abs(s - 1.0) <= 1e-9, "every table row must sum to 1");
    }
  }
}

std::vector<double> GroundTruthModel::class_marginal() const {
  std::vector<double> m(contexts.cols, 0.0);
  for (std::size_t k = 0; k < contexts.rows; ++k)
    for (std::size_t c = 0; c < contexts.cols; ++c) m[c] += context_weights[k] * contexts(k, c);
  return m;
}

namespace {

// Odd class c is the sibling of c - 1 when its pair index is in range.
bool is_sibling(const GenConfig& cfg, std::size_t c) {
  return c % 2 == 1 && (cfg.sibling_pairs == 0 || c / 2 < cfg.sibling_pairs);
}

}  // namespace

GroundTruthModel make_model(const GenConfig& cfg) {
  validate(cfg);
  Rng rng(derive_seed(cfg.seed, kModelStream));
  const std::size_t C = cfg.classes, P = cfg.predicates, D = cfg.feature_dim, K = cfg.contexts;
  GroundTruthModel m;
  for (std::size_t c = 0; c < C; ++c) m.classes.push_back(numbered("class_", c, 2));
  m.predicates.push_back(kNonePredicate);
  for (std::size_t p = 1; p < P; ++p) m.predicates.push_back(numbered("pred_", p, 2));

  m.prototypes = ad::Matrix(C, D);
  for (std::size_t c = 0; c < C; ++c) {
    auto v = random_direction(rng, D, 1.0);
    if (is_sibling(cfg, c) && cfg.sibling_similarity > 0.0) {
      for (std::size_t d = 0; d < D; ++d)
        v[d] = cfg.sibling_similarity * m.prototypes((c - 1), d) / cfg.prototype_scale +
               (1.0 - cfg.sibling_similarity) * v[d];
      v = normalized(std::move(v));
    }
    for (auto& x : v) x *= cfg.prototype_scale;
    std::copy(v.begin(), v.end(), m.prototypes.data.begin() + static_cast<std::ptrdiff_t>(c * D));
  }
  m.background = random_direction(rng, D, cfg.prototype_scale);

  m.class_dims = ad::Matrix(C, 3);
  for (auto& x : m.class_dims.data) x = rng.uniform(0.3, 1.5);
  for (std::size_t c = 1; c < C; c += 2)
    if (is_sibling(cfg, c))
      for (std::size_t a = 0; a < 3; ++a)
      m.class_dims(c, a) = cfg.sibling_similarity * m.class_dims(c - 1, a) + (1.0 - cfg.sibling_similarity) * m.class_dims(c, a);

  m.contexts = ad::Matrix(K, C);
  for (std::size_t k = 0; k < K && cfg.context_concentration > 0.0; ++k) {
    const auto d = rng.dirichlet(C, cfg.context_concentration);
    for (std::size_t c = 0; c < C; ++c) m.contexts(k, c) = d[c];
  }
  for (std::size_t k = 0; k < K && cfg.context_concentration == 0.0; ++k) {
    std::size_t own = 0;
    for (std::size_t c = k; c < C; c += K) ++own;
    for (std::size_t c = 0; c < C; ++c)
      m.contexts(k, c) = (1.0 - cfg.context_purity) / static_cast<double>(C) +
                         (c % K == k ? cfg.context_purity / static_cast<double>(own) : 0.0);
  }
  m.context_weights.resize(K);
  double total = 0.0;
  for (std::size_t k = 0; k < K; ++k) total += m.context_weights[k] = std::pow(static_cast<double>(k + 1), -cfg.context_skew);
  for (auto& w : m.context_weights) w /= total;

  m.predicate_table = ad::Matrix(C * C, P);
  for (std::size_t s = 0; s < C; ++s)
    for (std::size_t o = 0; o < C; ++o) {
      const std::size_t row = s * C + o;
      switch (cfg.table_mode) {
        case PredicateTable::concentrated: {
          const auto d = rng.dirichlet(P, cfg.predicate_concentration);
          for (std::size_t p = 0; p < P; ++p) m.predicate_table(row, p) = d[p];
          break;
        }
        case PredicateTable::joint:
          for (std::size_t p = 0; p < P; ++p)
            m.predicate_table(row, p) =
                cfg.joint_noise / static_cast<double>(P) + (p == (s + o) % P ? 1.0 - cfg.joint_noise : 0.0);
          break;
        case PredicateTable::given:
          for (std::size_t p = 0; p < P; ++p) m.predicate_table(row, p) = cfg.table[row * P + p];
          break;
      }
    }
  return m;
}

double draw_contamination(Rng& rng, const GenConfig& cfg) {
  const double beta = rng.uniform() * cfg.beta_max;
  return cfg.contamination == Contamination::mask ? beta * (1.0 - cfg.mask_quality) : beta;
}

SceneRecord generate_scene(const GenConfig& cfg, const GroundTruthModel& model, std::size_t index,
                           const std::string& scene_id) {
  Rng rng(derive_seed(cfg.seed, index));
  const std::size_t C = cfg.classes, D = cfg.feature_dim;
  SceneRecord scene;
  scene.scene_id = scene_id;
  scene.feature_dim = D;
  scene.classes = model.classes;
  scene.predicates = model.predicates;
  for (std::size_t v = 0; v < cfg.scene_views; ++v) scene.views.push_back({numbered("view_", v, 2)});

  const std::size_t context = rng.categorical(model.context_weights);
  const std::span<const double> class_dist(model.contexts.data.data() + context * C, C);
  const std::size_t m = cfg.min_nodes + rng.index(cfg.max_nodes - cfg.min_nodes + 1);

  for (std::size_t i = 0; i < m; ++i) {
    NodeInstance node;
    node.node_id = numbered("node_", i, 3);
    const std::size_t c = rng.categorical(class_dist);
    node.gt_class = static_cast<int>(c);

    Box3D& box = node.bbox;
    for (int a = 0; a < 3; ++a)
      box.dims[a] = model.class_dims(c, static_cast<std::size_t>(a)) * rng.uniform(1.0 - cfg.size_jitter, 1.0 + cfg.size_jitter);
    for (int a = 0; a < 2; ++a) {
      const double half = std::min(box.dims[a], cfg.room_size) / 2.0;
      box.centroid[a] = rng.uniform(half, cfg.room_size - half);
    }
    box.centroid[2] = box.dims[2] / 2.0 + rng.uniform(0.0, 1.0);

    const std::size_t n_points = cfg.min_points + rng.index(cfg.max_points - cfg.min_points + 1);
    node.points.reserve(n_points);
    for (std::size_t k = 0; k < n_points; ++k) {
      Point p;
      for (int a = 0; a < 3; ++a)
        p[static_cast<std::size_t>(a)] = static_cast<float>(box.centroid[a] + (rng.uniform() - 0.5) * box.dims[a]);
      node.points.push_back(p);
    }

    std::vector<std::size_t> views(cfg.scene_views);
    std::iota(views.begin(), views.end(), std::size_t{0});
    rng.shuffle(views);
    const std::size_t n_views = cfg.min_views + rng.index(cfg.max_views - cfg.min_views + 1);
    views.resize(n_views);
    std::sort(views.begin(), views.end());
    for (std::size_t v : views) {
      const double beta = draw_contamination(rng, cfg);
      std::vector<double> f(D);
      for (std::size_t d = 0; d < D; ++d)
        f[d] = (1.0 - beta) * model.prototypes(c, d) + beta * model.background[d] + cfg.feature_noise * rng.normal();
      f = normalized(std::move(f));
      ViewFeature vf;
      vf.view_id = scene.views[v].view_id;
      vf.feature.reserve(D);
      for (double x : f) vf.feature.push_back(static_cast<float>(x));
      node.view_features.push_back(std::move(vf));
    }
    scene.nodes.push_back(std::move(node));
  }

  scene = build_proximity_edges(std::move(scene), cfg.edge_radius);
  const std::size_t P = cfg.predicates;
  for (auto& e : scene.edges) {
    const std::size_t s = static_cast<std::size_t>(*scene.nodes[*scene.node_index(e.src)].gt_class);
    const std::size_t o = static_cast<std::size_t>(*scene.nodes[*scene.node_index(e.dst)].gt_class);
    const std::span<const double> row(model.predicate_table.data.data() + (s * C + o) * P, P);
    e.gt_predicate = static_cast<int>(rng.categorical(row));
  }
  return scene;
}

GeneratedCorpus gen_corpus(const GenConfig& cfg) {
  GeneratedCorpus out;
  out.model = make_model(cfg);
  struct Split {
    const char* name;
    std::size_t count;
    Corpus* corpus;
  };
  const Split splits[] = {{"train", cfg.train_scenes, &out.train},
                          {"val", cfg.val_scenes, &out.val},
                          {"test", cfg.test_scenes, &out.test}};
  std::size_t base = 0;
  const std::size_t threads = worker_threads(cfg.threads);
  for (const auto& split : splits) {
    Corpus& corpus = *split.corpus;
    corpus.classes = out.model.classes;
    corpus.predicates = out.model.predicates;
    corpus.feature_dim = cfg.feature_dim;
    corpus.scenes.resize(split.count);
    parallel_for(split.count, threads, [&](std::size_t i) {
      corpus.scenes[i] = generate_scene(cfg, out.model, base + i, std::string(split.name) + "_" + numbered("", i, 5));
    });
    base += split.count;
  }
  return out;
}

// ---- persistence ----------------------------------------------------------

namespace {

json matrix_json(const ad::Matrix& m) {
  return {{"rows", m.rows}, {"cols", m.cols}, {"data", m.data}};
}

ad::Matrix matrix_from(const json& j) {
  ad::Matrix m(j.at("rows").get<std::size_t>(), j.at("cols").get<std::size_t>());
  m.data = j.at("data").get<std::vector<double>>();
  if (m.data.size() != m.rows * m.cols) throw FormatError("matrix data length differs from rows * cols");
  return m;
}

}  // namespace

void save_model(const GroundTruthModel& m, const std::filesystem::path& path) {
  json doc;
  doc["classes"] = m.classes;
  doc["predicates"] = m.predicates;
  doc["prototypes"] = matrix_json(m.prototypes);
  doc["background"] = m.background;
  doc["class_dims"] = matrix_json(m.class_dims);
  doc["contexts"] = matrix_json(m.contexts);
  doc["context_weights"] = m.context_weights;
  doc["predicate_table"] = matrix_json(m.predicate_table);
  detail::write_text(path, doc.dump(1) + "\n");
}

GroundTruthModel load_model(const std::filesystem::path& path) {
  try {
    const json doc = json::parse(detail::read_text(path));
    GroundTruthModel m;
    m.classes = doc.at("classes").get<std::vector<std::string>>();
    m.predicates = doc.at("predicates").get<std::vector<std::string>>();
    m.prototypes = matrix_from(doc.at("prototypes"));
    m.background = doc.at("background").get<std::vector<double>>();
    m.class_dims = matrix_from(doc.at("class_dims"));
    m.contexts = matrix_from(doc.at("contexts"));
    m.context_weights = doc.at("context_weights").get<std::vector<double>>();
    m.predicate_table = matrix_from(doc.at("predicate_table"));
    const std::size_t C = m.classes.size(), P = m.predicates.size();
    if (m.prototypes.rows != C || m.background.size() != m.prototypes.cols || m.class_dims.rows != C ||
        m.contexts.cols != C || m.context_weights.size() != m.contexts.rows || m.predicate_table.rows != C * C ||
        m.predicate_table.cols != P)
      throw FormatError(path.string() + ": inconsistent ground-truth model shapes");
    return m;
  } catch (const json::exception& e) {
    throw FormatError(path.string() + ": " + e.what());
  }
}

void save_generated(const GeneratedCorpus& gen, const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir);
  save_corpus(gen.train, dir / "train");
  save_corpus(gen.val, dir / "val");
  save_corpus(gen.test, dir / "test");
  save_model(gen.model, dir / "model.json");
}

EvalReport bayes_reference(const Corpus& corpus, const GroundTruthModel& model, bool exclude_none) {
  const std::size_t C = model.classes.size(), P = model.predicates.size(), D = model.prototypes.cols;
  if (corpus.classes != model.classes || corpus.predicates != model.predicates || corpus.feature_dim != D)
    throw ValidationError("bayes_reference: corpus and ground-truth model disagree on vocabulary or feature width");
  std::vector<std::vector<double>> protos(C);
  for (std::size_t c = 0; c < C; ++c)
    protos[c] = normalized(std::vector<double>(model.prototypes.data.begin() + static_cast<std::ptrdiff_t>(c * D),
                                               model.prototypes.data.begin() + static_cast<std::ptrdiff_t>((c + 1) * D)));
  std::vector<LabeledGraph> graphs;
  for (const auto& scene : corpus.scenes) {
    LabeledGraph g;
    g.edges = scene.edge_index();
    for (const auto& node : scene.nodes) {
      const auto f = aggregate_multiview(node, D);
      std::size_t best = 0;
      double best_d = INFINITY;
      for (std::size_t c = 0; c < C; ++c) {
        double d2 = 0.0;
        for (std::size_t d = 0; d < D; ++d) d2 += (f[d] - protos[c][d]) * (f[d] - protos[c][d]);
        if (d2 < best_d) {
          best_d = d2;
          best = c;
        }
      }
      g.node_pred.push_back(best);
      g.node_gt.push_back(node.gt_class);
    }
    for (std::size_t k = 0; k < scene.edges.size(); ++k) {
      const auto [i, j] = g.edges[k];
      std::size_t pred = 0;
      const auto& si = scene.nodes[i].gt_class;
      const auto& oj = scene.nodes[j].gt_class;
      if (si && oj) {
        const std::size_t row = static_cast<std::size_t>(*si) * C + static_cast<std::size_t>(*oj);
        for (std::size_t p = 1; p < P; ++p)
          if (model.predicate_table(row, p) > model.predicate_table(row, pred)) pred = p;
      }
      g.edge_pred.push_back(pred);
      g.edge_gt.push_back(scene.edges[k].gt_predicate);
    }
    graphs.push_back(std::move(g));
  }
  return evaluate(graphs, C, P, exclude_none);
}

}  // namespace ssg
