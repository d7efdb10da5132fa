#include "ssg/pipeline.hpp"

#include <charconv>
#include <chrono>
#include <ctime>
#include <fstream>
#include <functional>
#include <iomanip>
#include <sstream>

#include "binary_io.hpp"
#include "json.hpp"
#include "ssg/error.hpp"
#include "ssg/parallel.hpp"

namespace ssg {

using nlohmann::json;

// ---- configuration --------------------------------------------------------

namespace {

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return "";
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

[[noreturn]] void bad_value(const std::string& key, const std::string& value, const char* expected) {
  throw ConfigError("key '" + key + "': '" + value + "' is not " + expected);
}

bool parse_bool(const std::string& key, const std::string& v) {
  if (v == "true" || v == "1" || v == "yes" || v == "on") return true;
  if (v == "false" || v == "0" || v == "no" || v == "off") return false;
  bad_value(key, v, "a boolean");
}

std::uint64_t parse_u64(const std::string& key, const std::string& v) {
  std::uint64_t x = 0;
  const auto [ptr, ec] = std::from_chars(v.data(), v.data() + v.size(), x);
  if (v.empty() || ec != std::errc() || ptr != v.data() + v.size()) bad_value(key, v, "a non-negative integer");
  return x;
}

std::size_t parse_size(const std::string& key, const std::string& v) { return static_cast<std::size_t>(parse_u64(key, v)); }

double parse_double(const std::string& key, const std::string& v) {
  double x = 0.0;
  const auto [ptr, ec] = std::from_chars(v.data(), v.data() + v.size(), x);
  if (v.empty() || ec != std::errc() || ptr != v.data() + v.size() || !std::isfinite(x)) bad_value(key, v, "a finite number");
  return x;
}

std::vector<std::size_t> parse_sizes(const std::string& key, const std::string& v) {
  std::vector<std::size_t> out;
  std::stringstream ss(v);
  std::string item;
  while (std::getline(ss, item, ',')) out.push_back(parse_size(key, trim(item)));
  if (out.empty()) bad_value(key, v, "a comma-separated list of integers");
  return out;
}

std::string fmt(double x) {
  char buf[64];
  const auto [ptr, ec] = std::to_chars(buf, buf + sizeof(buf), x);
  return std::string(buf, ptr);
}
std::string fmt(bool b) { return b ? "true" : "false"; }
std::string fmt(std::size_t x) { return std::to_string(x); }
std::string fmt(const std::vector<std::size_t>& v) {
  std::string s;
  for (std::size_t i = 0; i < v.size(); ++i) s += (i ? "," : "") + std::to_string(v[i]);
  return s;
}

struct KeyImpl {
  ConfigKey key;
  std::function<void(RunConfig&, const std::string&)> set;
  std::function<std::string(const RunConfig&)> get;
};

#define SSG_KEY(name, help, boolean, setter, getter)                                                  \
  KeyImpl {                                                                                            \
    ConfigKey{name, help, boolean}, [](RunConfig& c, const std::string& v) { setter; },               \
        [](const RunConfig& c) { return getter; }                                                      \
  }
#define SSG_SIZE(name, help, field) SSG_KEY(name, help, false, c.field = parse_size(name, v), fmt(c.field))
#define SSG_REAL(name, help, field) SSG_KEY(name, help, false, c.field = parse_double(name, v), fmt(c.field))
#define SSG_BOOL(name, help, field) SSG_KEY(name, help, true, c.field = parse_bool(name, v), fmt(c.field))
#define SSG_TEXT(name, help, field) SSG_KEY(name, help, false, c.field = v, c.field)

const std::vector<KeyImpl>& key_table() {
  static const std::vector<KeyImpl> table = {
      SSG_KEY("seed", "seed for generation, initialization and shuffling", false,
              (c.gen.seed = c.train.seed = parse_u64("seed", v)), fmt(c.train.seed)),
      SSG_KEY("threads", "worker threads (0: SSG_THREADS or 1)", false,
              (c.gen.threads = c.train.threads = parse_size("threads", v)), fmt(c.train.threads)),
      SSG_TEXT("corpus", "input corpus directory", corpus),
      SSG_TEXT("val-corpus", "validation corpus directory for train", val_corpus),
      SSG_TEXT("checkpoint", "model checkpoint file", checkpoint),
      SSG_TEXT("stats", "co-occurrence statistics file", stats),
      SSG_TEXT("scene", "scene file for predict", scene),
      SSG_TEXT("out", "output path", out),
      // model
      SSG_SIZE("hidden", "hidden width h", model.hidden),
      SSG_SIZE("layers", "message-passing layers", model.layers),
      SSG_KEY("point-widths", "point encoder layer widths, comma separated", false,
              c.model.point_widths = parse_sizes("point-widths", v), fmt(c.model.point_widths)),
      SSG_SIZE("max-points", "points per node fed to the encoder (0: all)", model.max_points),
      SSG_BOOL("geometric-gate", "enable the geometric gate", model.geometric_gate),
      SSG_BOOL("spatial-gate", "enable the spatial gate", model.spatial_gate),
      SSG_BOOL("neighbor-residual", "enable the max-pooled neighbor residual", model.neighbor_residual),
      // training
      SSG_SIZE("epochs", "maximum training epochs", train.max_epochs),
      SSG_SIZE("patience", "epochs without validation improvement before stopping", train.patience),
      SSG_SIZE("batch-size", "scenes per optimizer step", train.batch_size),
      SSG_REAL("step-size", "optimizer step size", train.step_size),
      SSG_REAL("beta1", "first-moment decay", train.beta1),
      SSG_REAL("beta2", "second-moment decay", train.beta2),
      SSG_REAL("adam-epsilon", "optimizer denominator offset", train.adam_epsilon),
      SSG_REAL("lambda-pred", "predicate loss weight", train.lambda_pred),
      SSG_BOOL("class-weighting", "inverse-frequency class weights in the loss", train.class_weighting),
      SSG_BOOL("cr-in-training", "apply rescoring inside the training loss", train.cr_in_training),
      // rescoring and evaluation
      SSG_BOOL("no-cr", "disable confidence rescoring", no_cr),
      SSG_KEY("fixed-alpha", "replace every confidence by this value (none: adaptive)", false,
              (c.fixed_alpha = v == "none" ? std::nullopt : std::optional<double>(parse_double("fixed-alpha", v))),
              c.fixed_alpha ? fmt(*c.fixed_alpha) : std::string("none")),
      SSG_KEY("cr-edge-combine", "subject/object prior combination: product or sum", false,
              (c.combine = v == "product" ? EdgeCombine::product
                           : v == "sum"   ? EdgeCombine::sum
                                          : (bad_value("cr-edge-combine", v, "product or sum"), EdgeCombine::sum)),
              std::string(c.combine == EdgeCombine::product ? "product" : "sum")),
      SSG_KEY("neighbor-evidence", "neighbor prior from the argmax class or the expectation", false,
              (c.neighbor_evidence = v == "argmax"        ? NeighborEvidence::argmax
                                     : v == "expectation" ? NeighborEvidence::expectation
                                                          : (bad_value("neighbor-evidence", v, "argmax or expectation"),
                                                             NeighborEvidence::argmax)),
              std::string(c.neighbor_evidence == NeighborEvidence::argmax ? "argmax" : "expectation")),
      SSG_BOOL("exclude-none", "leave none-labeled edges out of predicate and triplet metrics", exclude_none),
      SSG_REAL("drop-top-frac", "fraction of the most frequent triplets removed by ablate-stats", drop_top_frac),
      SSG_KEY("missing-views", "nodes without views: strict or zero-fill", false,
              (c.missing_views = v == "strict"      ? MissingViews::strict
                                 : v == "zero-fill" ? MissingViews::zero_fill
                                                    : (bad_value("missing-views", v, "strict or zero-fill"),
                                                       MissingViews::strict)),
              std::string(c.missing_views == MissingViews::strict ? "strict" : "zero-fill")),
      // generation
      SSG_SIZE("classes", "object classes C", gen.classes),
      SSG_SIZE("predicates", "predicates P including none", gen.predicates),
      SSG_SIZE("feature-dim", "view feature width D", gen.feature_dim),
      SSG_SIZE("train-scenes", "generated training scenes", gen.train_scenes),
      SSG_SIZE("val-scenes", "generated validation scenes", gen.val_scenes),
      SSG_SIZE("test-scenes", "generated test scenes", gen.test_scenes),
      SSG_SIZE("min-nodes", "fewest nodes per scene", gen.min_nodes),
      SSG_SIZE("max-nodes", "most nodes per scene", gen.max_nodes),
      SSG_REAL("edge-radius", "centroid distance that creates an edge", gen.edge_radius),
      SSG_REAL("room-size", "room side length in meters", gen.room_size),
      SSG_REAL("prototype-scale", "norm of the class prototypes", gen.prototype_scale),
      SSG_REAL("sibling-similarity", "prototype similarity of class pairs 2i, 2i+1", gen.sibling_similarity),
      SSG_SIZE("sibling-pairs", "how many class pairs are siblings (0: all)", gen.sibling_pairs),
      SSG_REAL("feature-noise", "per-dimension view feature noise", gen.feature_noise),
      SSG_KEY("contamination", "background contamination mode: mask or bbox", false,
              (c.gen.contamination = v == "mask"   ? Contamination::mask
                                     : v == "bbox" ? Contamination::bbox
                                                   : (bad_value("contamination", v, "mask or bbox"), Contamination::mask)),
              std::string(c.gen.contamination == Contamination::mask ? "mask" : "bbox")),
      SSG_REAL("beta-max", "largest background blend weight", gen.beta_max),
      SSG_REAL("mask-quality", "mask mode scales contamination by 1 - q", gen.mask_quality),
      SSG_KEY("predicate-table", "predicate table: concentrated or joint", false,
              (c.gen.table_mode = v == "concentrated" ? PredicateTable::concentrated
                                  : v == "joint"      ? PredicateTable::joint
                                                      : (bad_value("predicate-table", v, "concentrated or joint"),
                                                         PredicateTable::joint)),
              std::string(c.gen.table_mode == PredicateTable::joint ? "joint" : "concentrated")),
      SSG_REAL("predicate-concentration", "Dirichlet concentration of the predicate table", gen.predicate_concentration),
      SSG_REAL("joint-noise", "uniform mass in the joint predicate table", gen.joint_noise),
      SSG_SIZE("contexts", "class context mixtures", gen.contexts),
      SSG_REAL("context-purity", "mass a context puts on its own classes", gen.context_purity),
      SSG_REAL("context-skew", "context k is drawn with weight (k + 1)^-skew", gen.context_skew),
      SSG_REAL("context-concentration", "Dirichlet concentration of random contexts (0: block contexts)",
               gen.context_concentration),
      SSG_REAL("size-jitter", "relative per-instance box size noise", gen.size_jitter),
      SSG_SIZE("gen-min-points", "fewest points per generated node", gen.min_points),
      SSG_SIZE("gen-max-points", "most points per generated node", gen.max_points),
      SSG_SIZE("min-views", "fewest views per node", gen.min_views),
      SSG_SIZE("max-views", "most views per node", gen.max_views),
      SSG_SIZE("scene-views", "views per scene", gen.scene_views),
  };
  return table;
}

#undef SSG_TEXT
#undef SSG_BOOL
#undef SSG_REAL
#undef SSG_SIZE
#undef SSG_KEY

const KeyImpl& find_key(const std::string& key) {
  for (const auto& k : key_table())
    if (k.key.name == key) return k;
  throw ConfigError("unknown configuration key '" + key + "'");
}

}  // namespace

const std::vector<ConfigKey>& config_keys() {
  static const std::vector<ConfigKey> keys = [] {
    std::vector<ConfigKey> out;
    for (const auto& k : key_table()) out.push_back(k.key);
    return out;
  }();
  return keys;
}

void apply_setting(RunConfig& cfg, const std::string& key, const std::string& value) {
  find_key(key).set(cfg, trim(value));
}

std::string get_setting(const RunConfig& cfg, const std::string& key) { return find_key(key).get(cfg); }

void apply_config_text(RunConfig& cfg, const std::string& text) {
  std::stringstream ss(text);
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(ss, line)) {
    ++lineno;
    const std::string t = trim(line);
    if (t.empty() || t[0] == '#') continue;
    const auto eq = t.find('=');
    if (eq == std::string::npos) throw ConfigError("config line " + std::to_string(lineno) + ": expected key = value");
    try {
      apply_setting(cfg, trim(t.substr(0, eq)), t.substr(eq + 1));
    } catch (const ConfigError& e) {
      throw ConfigError("config line " + std::to_string(lineno) + ": " + e.what());
    }
  }
}

RunConfig load_run_config(const std::filesystem::path& path) {
  RunConfig cfg;
  apply_config_text(cfg, detail::read_text(path));
  return cfg;
}

std::string dump_run_config(const RunConfig& cfg) {
  std::string out;
  for (const auto& k : key_table()) out += k.key.name + " = " + k.get(cfg) + "\n";
  return out;
}

void validate(const RunConfig& cfg) {
  if (cfg.model.hidden == 0) throw ConfigError("hidden must be positive");
  if (cfg.model.layers == 0) throw ConfigError("layers must be positive");
  if (cfg.fixed_alpha && !(*cfg.fixed_alpha > 0.0 && *cfg.fixed_alpha <= 1.0))
    throw ConfigError("fixed-alpha must lie in (0, 1]");
  if (!(cfg.drop_top_frac >= 0.0 && cfg.drop_top_frac < 1.0)) throw ConfigError("drop-top-frac must lie in [0, 1)");
  validate(cfg.train);
}

// ---- prediction and evaluation --------------------------------------------

namespace {

std::vector<std::size_t> argmax_rows(const ad::Matrix& m) {
  std::vector<std::size_t> out(m.rows, 0);
  for (std::size_t i = 0; i < m.rows; ++i)
    for (std::size_t k = 1; k < m.cols; ++k)
      if (m(i, k) > m(i, out[i])) out[i] = k;
  return out;
}

template <class R>
R unrescored(const ad::Matrix& logits) {
  R r;
  r.base = softmax_rows(logits);
  r.refined = r.base;
  r.base_class = argmax_rows(r.base);
  r.refined_class = r.base_class;
  for (std::size_t i = 0; i < r.base.rows; ++i) r.confidence.push_back(r.base(i, r.base_class[i]));
  return r;
}

void check_model_fits(const ModelConfig& m, const Corpus& corpus) {
  if (m.classes != corpus.classes.size() || m.predicates != corpus.predicates.size() ||
      m.feature_dim != corpus.feature_dim)
    throw ValidationError("checkpoint and corpus disagree on class count, predicate count or feature width");
}

}  // namespace

ScenePrediction predict_from_logits(const LogitMatrices& logits, const PreparedScene& scene,
                                    const RescorePrior* prior, const RescoreOptions& options) {
  ScenePrediction p;
  p.edges = scene.edges;
  if (prior) {
    p.nodes = rescore_nodes(logits.nodes, scene.neighbors, *prior, options);
    p.edges_out = rescore_edges(logits.edges, scene.edges, p.nodes, *prior, options);
    p.rescored = true;
  } else {
    p.nodes = unrescored<NodeRescore>(logits.nodes);
    p.edges_out = unrescored<EdgeRescore>(logits.edges);
  }
  return p;
}

ScenePrediction predict_scene(const ModelCheckpoint& ckpt, const SceneRecord& scene, const RescorePrior* prior,
                              const RescoreOptions& options, MissingViews missing) {
  const auto prepared = prepare_scene(scene, ckpt.model, missing);
  return predict_from_logits(infer_logits(ckpt.params, ckpt.model, prepared), prepared, prior, options);
}

namespace {

std::vector<double> row_of(const ad::Matrix& m, std::size_t r) {
  return std::vector<double>(m.data.begin() + static_cast<std::ptrdiff_t>(r * m.cols),
                             m.data.begin() + static_cast<std::ptrdiff_t>((r + 1) * m.cols));
}

}  // namespace

std::string prediction_json(const SceneRecord& scene, const ScenePrediction& p) {
  json doc;
  doc["scene_id"] = scene.scene_id;
  doc["rescored"] = p.rescored;
  json nodes = json::array();
  for (std::size_t i = 0; i < scene.nodes.size(); ++i) {
    const std::size_t c = p.nodes.refined_class[i];
    json n = {{"node_id", scene.nodes[i].node_id},
              {"class", scene.classes[c]},
              {"class_index", c},
              {"confidence", p.nodes.refined(i, c)},
              {"distribution", row_of(p.nodes.refined, i)}};
    if (p.rescored) {
      n["base_class"] = scene.classes[p.nodes.base_class[i]];
      n["base_distribution"] = row_of(p.nodes.base, i);
    }
    nodes.push_back(std::move(n));
  }
  json edges = json::array();
  for (std::size_t k = 0; k < scene.edges.size(); ++k) {
    const std::size_t r = p.edges_out.refined_class[k];
    json e = {{"src", scene.edges[k].src},
              {"dst", scene.edges[k].dst},
              {"predicate", scene.predicates[r]},
              {"predicate_index", r},
              {"confidence", p.edges_out.refined(k, r)},
              {"distribution", row_of(p.edges_out.refined, k)}};
    if (p.rescored) {
      e["base_predicate"] = scene.predicates[p.edges_out.base_class[k]];
      e["base_distribution"] = row_of(p.edges_out.base, k);
    }
    edges.push_back(std::move(e));
  }
  doc["nodes"] = std::move(nodes);
  doc["edges"] = std::move(edges);
  return doc.dump(2) + "\n";
}

CorpusLogits infer_corpus(const ModelCheckpoint& ckpt, const Corpus& corpus, std::size_t threads, MissingViews missing) {
  check_model_fits(ckpt.model, corpus);
  CorpusLogits out;
  out.scenes.resize(corpus.scenes.size());
  out.logits.resize(corpus.scenes.size());
  parallel_for(corpus.scenes.size(), worker_threads(threads), [&](std::size_t i) {
    out.scenes[i] = prepare_scene(corpus.scenes[i], ckpt.model, missing);
    out.logits[i] = infer_logits(ckpt.params, ckpt.model, out.scenes[i]);
  });
  return out;
}

EvalReport evaluate_logits(const CorpusLogits& outputs, std::size_t classes, std::size_t predicates,
                           const RescorePrior* prior, const RescoreOptions& options, bool exclude_none) {
  std::vector<LabeledGraph> graphs;
  std::vector<double> base_rows, refined_rows;
  std::vector<std::size_t> gt;
  for (std::size_t s = 0; s < outputs.scenes.size(); ++s) {
    const auto& scene = outputs.scenes[s];
    const auto p = predict_from_logits(outputs.logits[s], scene, prior, options);
    LabeledGraph g;
    g.edges = scene.edges;
    g.node_pred = p.nodes.refined_class;
    g.edge_pred = p.edges_out.refined_class;
    for (std::size_t i = 0; i < scene.node_targets.size(); ++i) {
      const int t = scene.node_targets[i];
      g.node_gt.push_back(t >= 0 ? std::optional<int>(t) : std::nullopt);
      if (t < 0) continue;
      const auto b = row_of(p.nodes.base, i), r = row_of(p.nodes.refined, i);
      base_rows.insert(base_rows.end(), b.begin(), b.end());
      refined_rows.insert(refined_rows.end(), r.begin(), r.end());
      gt.push_back(static_cast<std::size_t>(t));
    }
    for (int t : scene.edge_targets) g.edge_gt.push_back(t >= 0 ? std::optional<int>(t) : std::nullopt);
    graphs.push_back(std::move(g));
  }
  auto report = evaluate(graphs, classes, predicates, exclude_none);
  report.calibration = calibration_report(ad::Matrix(gt.size(), classes, std::move(base_rows)),
                                          ad::Matrix(gt.size(), classes, std::move(refined_rows)), gt);
  return report;
}

EvalReport evaluate_corpus(const ModelCheckpoint& ckpt, const Corpus& corpus, const RescorePrior* prior,
                           const RescoreOptions& options, bool exclude_none) {
  const auto outputs = infer_corpus(ckpt, corpus);
  return evaluate_logits(outputs, corpus.classes.size(), corpus.predicates.size(), prior, options, exclude_none);
}

ModelConfig model_config_for(const RunConfig& cfg, const Corpus& corpus) {
  ModelConfig m = cfg.model;
  m.feature_dim = corpus.feature_dim;
  m.classes = corpus.classes.size();
  m.predicates = corpus.predicates.size();
  validate(m);
  return m;
}

// ---- commands -------------------------------------------------------------

namespace {

const std::string& require_path(const std::string& value, const char* key) {
  if (value.empty()) throw ConfigError(std::string("missing required --") + key);
  return value;
}

std::string timestamp() {
  const auto now = std::chrono::system_clock::now();
  const std::time_t t = std::chrono::system_clock::to_time_t(now);
  std::tm tm{};
  gmtime_r(&t, &tm);
  std::ostringstream os;
  os << std::put_time(&tm, "%Y-%m-%dT%H:%M:%SZ");
  return os.str();
}

json rescore_json(const RunConfig& cfg) {
  return {{"enabled", !cfg.no_cr},
          {"fixed_alpha", cfg.fixed_alpha ? json(*cfg.fixed_alpha) : json(nullptr)},
          {"edge_combine", get_setting(cfg, "cr-edge-combine")},
          {"neighbor_evidence", get_setting(cfg, "neighbor-evidence")}};
}

std::optional<RescorePrior> load_prior(const RunConfig& cfg, const std::vector<std::string>& classes,
                                       const std::vector<std::string>& predicates) {
  // With rescoring disabled the statistics file is never opened.
  if (cfg.no_cr) return std::nullopt;
  const auto stats = load_stats(require_path(cfg.stats, "stats"));
  check_vocabulary(stats, classes, predicates);
  return RescorePrior(stats);
}

}  // namespace

std::string cmd_gen(const RunConfig& cfg) {
  const auto& out = require_path(cfg.out, "out");
  const auto gen = gen_corpus(cfg.gen);
  save_generated(gen, out);
  return "generated " + std::to_string(gen.train.scenes.size()) + " train, " + std::to_string(gen.val.scenes.size()) +
         " val, " + std::to_string(gen.test.scenes.size()) + " test scenes in " + out;
}

std::string cmd_stats(const RunConfig& cfg) {
  const auto corpus = load_corpus(require_path(cfg.corpus, "corpus"));
  const auto stats = compute_stats(corpus);
  save_stats(stats, require_path(cfg.out, "out"));
  return "wrote statistics over " + std::to_string(stats.triplets.size()) + " distinct triplets to " + cfg.out;
}

std::string cmd_train(const RunConfig& cfg) {
  validate(cfg);
  const auto& out = require_path(cfg.out, "out");
  const auto train_set = load_corpus(require_path(cfg.corpus, "corpus"));
  Corpus val_set;
  if (!cfg.val_corpus.empty()) val_set = load_corpus(cfg.val_corpus);
  std::optional<CooccurrenceStats> stats;
  if (cfg.train.cr_in_training) {
    stats = load_stats(require_path(cfg.stats, "stats"));
    check_vocabulary(*stats, train_set.classes, train_set.predicates);
  }
  const auto model = model_config_for(cfg, train_set);

  std::ofstream log(out + ".log");
  log << timestamp() << " train start: " << train_set.scenes.size() << " scenes, " << val_set.scenes.size()
      << " validation scenes\n";
  const auto result = train(train_set, val_set, model, cfg.train, stats ? &*stats : nullptr, [&](const EpochRecord& r) {
    log << timestamp() << " epoch " << r.epoch << " loss " << r.train_loss << " val_rel " << r.val_recall_rel
        << " val_obj " << r.val_recall_obj << " val_pred " << r.val_recall_pred << "\n";
    log.flush();
  });
  save_checkpoint(result.checkpoint, out);

  json history = json::array();
  for (const auto& r : result.history)
    history.push_back({{"epoch", r.epoch},
                       {"train_loss", r.train_loss},
                       {"val_recall_rel", r.val_recall_rel},
                       {"val_recall_obj", r.val_recall_obj},
                       {"val_recall_pred", r.val_recall_pred}});
  detail::write_text(out + ".history.json",
                     json{{"best_epoch", result.checkpoint.best_epoch}, {"epochs", history}}.dump(2) + "\n");
  log << timestamp() << " train done: best epoch " << result.checkpoint.best_epoch << "\n";
  return "trained " + std::to_string(result.history.size()) + " epochs, best epoch " +
         std::to_string(result.checkpoint.best_epoch) + ", checkpoint " + out;
}

std::string cmd_eval(const RunConfig& cfg) {
  validate(cfg);
  const auto corpus = load_corpus(require_path(cfg.corpus, "corpus"));
  const auto ckpt = load_checkpoint(require_path(cfg.checkpoint, "checkpoint"));
  const auto prior = load_prior(cfg, corpus.classes, corpus.predicates);
  const auto outputs = infer_corpus(ckpt, corpus, cfg.train.threads, cfg.missing_views);
  const auto report = evaluate_logits(outputs, corpus.classes.size(), corpus.predicates.size(),
                                      prior ? &*prior : nullptr, cfg.rescore_options(), cfg.exclude_none);
  if (!cfg.out.empty()) {
    json doc = json::parse(to_json(report, corpus.classes, corpus.predicates));
    doc["rescoring"] = rescore_json(cfg);
    doc["scenes"] = corpus.scenes.size();
    detail::write_text(cfg.out, doc.dump(2) + "\n");
  }
  return format_table(report, cfg.no_cr ? "no-cr" : "cr");
}

std::string cmd_predict(const RunConfig& cfg) {
  validate(cfg);
  const auto scene = load_scene(require_path(cfg.scene, "scene"));
  const auto ckpt = load_checkpoint(require_path(cfg.checkpoint, "checkpoint"));
  const auto prior = load_prior(cfg, scene.classes, scene.predicates);
  const auto p = predict_scene(ckpt, scene, prior ? &*prior : nullptr, cfg.rescore_options(), cfg.missing_views);
  const auto text = prediction_json(scene, p);
  if (cfg.out.empty()) return text;
  detail::write_text(cfg.out, text);
  return "wrote " + std::to_string(scene.nodes.size()) + " nodes and " + std::to_string(scene.edges.size()) +
         " edges to " + cfg.out;
}

std::string cmd_ablate_stats(const RunConfig& cfg) {
  const auto stats = load_stats(require_path(cfg.stats, "stats"));
  const auto ablated = ablate_stats(stats, cfg.drop_top_frac);
  save_stats(ablated, require_path(cfg.out, "out"));
  return "dropped " + std::to_string(stats.triplets.size() - ablated.triplets.size()) + " of " +
         std::to_string(stats.triplets.size()) + " triplets, wrote " + cfg.out;
}

}  // namespace ssg
