#include "ssg/predictors.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>

#include "binary_io.hpp"
#include "json.hpp"
#include "ssg/error.hpp"
#include "ssg/metrics.hpp"
#include "ssg/parallel.hpp"
#include "ssg/random.hpp"

namespace ssg {

using nlohmann::json;

PreparedScene prepare_scene(const SceneRecord& scene, const ModelConfig& cfg, MissingViews missing) {
  if (scene.feature_dim != cfg.feature_dim)
    throw ValidationError("scene " + scene.scene_id + ": feature dimension " + std::to_string(scene.feature_dim) +
                          " differs from the model's " + std::to_string(cfg.feature_dim));
  if (scene.classes.size() != cfg.classes || scene.predicates.size() != cfg.predicates)
    throw ValidationError("scene " + scene.scene_id + ": vocabulary size differs from the model");
  PreparedScene out;
  out.features = prepare_features(scene, cfg.max_points, missing);
  out.edges = scene.edge_index();
  out.topology = make_topology(scene.nodes.size(), out.edges);
  out.neighbors = out.topology.neighbors();
  out.edge_descriptors = edge_descriptors(scene);
  out.node_targets.reserve(scene.nodes.size());
  for (const auto& n : scene.nodes) out.node_targets.push_back(n.gt_class ? *n.gt_class : -1);
  out.edge_targets.reserve(scene.edges.size());
  for (const auto& e : scene.edges) out.edge_targets.push_back(e.gt_predicate ? *e.gt_predicate : -1);
  return out;
}

SceneLogits predict_logits(const GraphState& state, const PredictorParams<ad::Value>& heads) {
  return {apply(heads.node_head, state.nodes), apply(heads.edge_head, state.edges)};
}

SceneLogits forward_scene(ad::Tape& tape, const PreparedScene& scene, const BoundParams& params,
                          const ModelConfig& cfg) {
  const auto init = init_scene_features(tape, scene.features, params);
  const auto v = apply(params.input_proj, init.v0);
  const auto e = apply(params.edge_embed, tape.constant(scene.edge_descriptors));
  const GnnOptions options{cfg.geometric_gate, cfg.spatial_gate, cfg.neighbor_residual};
  const auto state = forward(v, init.v_geo, init.v_spat, e, scene.topology, params.layers, options);
  return predict_logits(state, params.predictors);
}

namespace {

void check_targets(std::span<const int> targets, std::size_t limit, const char* what) {
  for (int t : targets)
    if (t >= static_cast<int>(limit))
      throw ValidationError(std::string(what) + " label " + std::to_string(t) + " out of range [0, " +
                            std::to_string(limit) + ")");
}

}  // namespace

ad::Value loss(const SceneLogits& logits, std::span<const int> node_targets, std::span<const int> edge_targets,
               const LossWeights& weights) {
  if (node_targets.size() != logits.nodes.rows()) throw ShapeError("loss: node target count differs from logit rows");
  if (edge_targets.size() != logits.edges.rows()) throw ShapeError("loss: edge target count differs from logit rows");
  check_targets(node_targets, logits.nodes.cols(), "object");
  check_targets(edge_targets, logits.edges.cols(), "predicate");
  const auto node_ce = ad::cross_entropy_rows(logits.nodes, node_targets, weights.node_class);
  const auto edge_ce = ad::cross_entropy_rows(logits.edges, edge_targets, weights.edge_class);
  return ad::add(node_ce, ad::scale(edge_ce, weights.lambda_pred));
}

void validate(const TrainConfig& cfg) {
  if (!(cfg.step_size > 0.0) || !std::isfinite(cfg.step_size)) throw ConfigError("step_size must be finite and > 0");
  if (cfg.patience == 0) throw ConfigError("patience must be >= 1");
  if (cfg.max_epochs == 0) throw ConfigError("max_epochs must be >= 1");
  if (!(cfg.beta1 >= 0.0 && cfg.beta1 < 1.0)) throw ConfigError("beta1 must lie in [0, 1)");
  if (!(cfg.beta2 >= 0.0 && cfg.beta2 < 1.0)) throw ConfigError("beta2 must lie in [0, 1)");
  if (!(cfg.adam_epsilon > 0.0)) throw ConfigError("adam_epsilon must be > 0");
  if (cfg.batch_size == 0) throw ConfigError("batch_size must be >= 1");
  if (!(cfg.lambda_pred >= 0.0) || !std::isfinite(cfg.lambda_pred)) throw ConfigError("lambda_pred must be finite and >= 0");
}

Adam::Adam(const TrainConfig& cfg, std::size_t size)
    : lr_(cfg.step_size), b1_(cfg.beta1), b2_(cfg.beta2), eps_(cfg.adam_epsilon), m_(size, 0.0), v_(size, 0.0) {}

void Adam::step(ModelParams& params, std::span<const double> grad) {
  if (grad.size() != m_.size()) throw ShapeError("Adam::step: gradient size differs from the parameter count");
  ++t_;
  const double c1 = 1.0 - std::pow(b1_, static_cast<double>(t_));
  const double c2 = 1.0 - std::pow(b2_, static_cast<double>(t_));
  std::size_t k = 0;
  visit_params(params, [&](const std::string&, ad::Matrix& m) {
    for (double& x : m.data) {
      const double g = grad[k];
      m_[k] = b1_ * m_[k] + (1.0 - b1_) * g;
      v_[k] = b2_ * v_[k] + (1.0 - b2_) * g * g;
      x -= lr_ * (m_[k] / c1) / (std::sqrt(v_[k] / c2) + eps_);
      ++k;
    }
  });
}

LogitMatrices infer_logits(const ModelParams& params, const ModelConfig& cfg, const PreparedScene& scene) {
  ad::Tape tape;
  const auto bound = bind(params, tape, false);
  const auto logits = forward_scene(tape, scene, bound, cfg);
  return {logits.nodes.matrix(), logits.edges.matrix()};
}

namespace {

// Rescored logits on the tape: alpha * z + (1 - alpha) * prior, with alpha and
// the prior treated as constants.
ad::Value blended(const ad::Value& z, const RescoreTerms& terms) {
  auto& tape = z.tape();
  ad::Matrix alpha(z.rows(), 1);
  ad::Matrix offset = terms.prior;
  for (std::size_t i = 0; i < z.rows(); ++i) {
    alpha(i, 0) = terms.alpha[i];
    for (std::size_t k = 0; k < offset.cols; ++k) offset(i, k) *= 1.0 - terms.alpha[i];
  }
  return ad::add(ad::mul(z, tape.constant(alpha)), tape.constant(offset));
}

SceneLogits rescored(const SceneLogits& logits, const PreparedScene& scene, const RescorePrior& prior) {
  const auto node_base = softmax_rows(logits.nodes.matrix());
  const auto node_terms = node_rescore_terms(node_base, scene.neighbors, prior);
  SceneLogits out;
  out.nodes = blended(logits.nodes, node_terms);
  const auto node_refined = softmax_rows(out.nodes.matrix());
  const auto edge_terms = edge_rescore_terms(softmax_rows(logits.edges.matrix()), scene.edges, node_refined, prior);
  out.edges = blended(logits.edges, edge_terms);
  return out;
}

struct SceneGrad {
  double loss = 0.0;
  std::vector<double> grad;
};

SceneGrad scene_gradient(const ModelParams& params, const ModelConfig& cfg, const PreparedScene& scene,
                         const LossWeights& weights, const RescorePrior* prior) {
  ad::Tape tape;
  const auto bound = bind(params, tape, true);
  auto logits = forward_scene(tape, scene, bound, cfg);
  if (prior) logits = rescored(logits, scene, *prior);
  const auto l = loss(logits, scene.node_targets, scene.edge_targets, weights);
  tape.backward(l);
  return {l.item(), flat_grad(bound)};
}

std::vector<double> inverse_frequency(const std::vector<std::size_t>& counts) {
  std::size_t total = 0, present = 0;
  for (auto c : counts) {
    total += c;
    if (c) ++present;
  }
  std::vector<double> w(counts.size(), 1.0);
  if (!present) return w;
  for (std::size_t k = 0; k < counts.size(); ++k)
    if (counts[k]) w[k] = static_cast<double>(total) / (static_cast<double>(present) * static_cast<double>(counts[k]));
  return w;
}

LossWeights make_weights(std::span<const PreparedScene> scenes, const ModelConfig& mc, const TrainConfig& cfg) {
  LossWeights w;
  w.lambda_pred = cfg.lambda_pred;
  if (!cfg.class_weighting) return w;
  std::vector<std::size_t> nc(mc.classes, 0), pc(mc.predicates, 0);
  for (const auto& s : scenes) {
    for (int t : s.node_targets)
      if (t >= 0 && static_cast<std::size_t>(t) < nc.size()) ++nc[static_cast<std::size_t>(t)];
    for (int t : s.edge_targets)
      if (t >= 0 && static_cast<std::size_t>(t) < pc.size()) ++pc[static_cast<std::size_t>(t)];
  }
  w.node_class = inverse_frequency(nc);
  w.edge_class = inverse_frequency(pc);
  return w;
}

std::size_t argmax_row(const ad::Matrix& m, std::size_t r) {
  std::size_t best = 0;
  for (std::size_t k = 1; k < m.cols; ++k)
    if (m(r, k) > m(r, best)) best = k;
  return best;
}

EvalReport validation_report(const ModelParams& params, const ModelConfig& cfg, std::span<const PreparedScene> scenes) {
  std::vector<LabeledGraph> graphs;
  graphs.reserve(scenes.size());
  for (const auto& s : scenes) {
    const auto logits = infer_logits(params, cfg, s);
    LabeledGraph g;
    g.edges = s.edges;
    for (std::size_t i = 0; i < logits.nodes.rows; ++i) g.node_pred.push_back(argmax_row(logits.nodes, i));
    for (std::size_t k = 0; k < logits.edges.rows; ++k) g.edge_pred.push_back(argmax_row(logits.edges, k));
    for (int t : s.node_targets) g.node_gt.push_back(t >= 0 ? std::optional<int>(t) : std::nullopt);
    for (int t : s.edge_targets) g.edge_gt.push_back(t >= 0 ? std::optional<int>(t) : std::nullopt);
    graphs.push_back(std::move(g));
  }
  return evaluate(graphs, cfg.classes, cfg.predicates, false);
}

void add_into(std::vector<double>& acc, const std::vector<double>& g) {
  for (std::size_t k = 0; k < acc.size(); ++k) acc[k] += g[k];
}

}  // namespace

TrainResult train(const Corpus& train_set, const Corpus& val_set, const ModelConfig& model_cfg,
                  const TrainConfig& cfg, const CooccurrenceStats* stats, const EpochCallback& on_epoch) {
  validate(model_cfg);
  validate(cfg);
  if (train_set.scenes.empty()) throw ValidationError("training corpus is empty");
  std::optional<RescorePrior> prior;
  if (cfg.cr_in_training) {
    if (!stats) throw ConfigError("rescoring in training requires co-occurrence statistics");
    check_vocabulary(*stats, train_set.classes, train_set.predicates);
    prior.emplace(*stats);
  }

  std::vector<PreparedScene> train_scenes, val_scenes;
  for (const auto& s : train_set.scenes) train_scenes.push_back(prepare_scene(s, model_cfg));
  for (const auto& s : val_set.scenes) val_scenes.push_back(prepare_scene(s, model_cfg));
  const LossWeights weights = make_weights(train_scenes, model_cfg, cfg);
  const std::size_t threads = worker_threads(cfg.threads);

  TrainResult result;
  result.checkpoint.model = model_cfg;
  result.checkpoint.train = cfg;
  ModelParams params = init_params(model_cfg, cfg.seed);
  result.checkpoint.params = params;
  Adam adam(cfg, scalar_count(params));

  double best = -std::numeric_limits<double>::infinity();
  std::size_t since_best = 0;
  std::vector<std::size_t> order(train_scenes.size());
  for (std::size_t epoch = 0; epoch < cfg.max_epochs; ++epoch) {
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
    Rng rng(derive_seed(cfg.seed, epoch + 1));
    rng.shuffle(order);

    double epoch_loss = 0.0;
    try {
      for (std::size_t start = 0; start < order.size(); start += cfg.batch_size) {
        const std::size_t n = std::min(cfg.batch_size, order.size() - start);
        std::vector<SceneGrad> grads(n);
        parallel_for(n, threads, [&](std::size_t b) {
          grads[b] = scene_gradient(params, model_cfg, train_scenes[order[start + b]], weights,
                                    prior ? &*prior : nullptr);
        });
        // Summed in batch order so the result does not depend on scheduling.
        std::vector<double> total(grads[0].grad.size(), 0.0);
        for (const auto& g : grads) {
          add_into(total, g.grad);
          epoch_loss += g.loss;
        }
        for (double& g : total) g /= static_cast<double>(n);
        adam.step(params, total);
        visit_params(params, [&](const std::string& name, const ad::Matrix& m) {
          for (double x : m.data)
            if (!std::isfinite(x)) throw NumericError("parameter " + name + " became non-finite");
        });
      }
    } catch (const NumericError& e) {
      throw NumericError("training diverged at epoch " + std::to_string(epoch) + ": " + e.what());
    }

    EpochRecord rec;
    rec.epoch = epoch;
    rec.train_loss = epoch_loss / static_cast<double>(order.size());
    double score = -rec.train_loss;
    if (!val_scenes.empty()) {
      const auto report = validation_report(params, model_cfg, val_scenes);
      rec.val_recall_rel = report.recall_rel;
      rec.val_recall_obj = report.recall_obj;
      rec.val_recall_pred = report.recall_pred;
      score = report.recall_rel;
    }
    result.history.push_back(rec);
    if (on_epoch) on_epoch(rec);
    if (score > best) {
      best = score;
      since_best = 0;
      result.checkpoint.params = params;
      result.checkpoint.best_epoch = epoch;
    } else if (++since_best >= cfg.patience && cfg.patience > 0) {
      break;
    }
  }
  return result;
}

// ---- checkpoints ----------------------------------------------------------

namespace {

json model_json(const ModelConfig& c) {
  return {{"feature_dim", c.feature_dim},       {"classes", c.classes},
          {"predicates", c.predicates},         {"hidden", c.hidden},
          {"layers", c.layers},                 {"point_widths", c.point_widths},
          {"max_points", c.max_points},         {"geometric_gate", c.geometric_gate},
          {"spatial_gate", c.spatial_gate},     {"neighbor_residual", c.neighbor_residual}};
}

ModelConfig model_from(const json& j) {
  ModelConfig c;
  c.feature_dim = j.at("feature_dim").get<std::size_t>();
  c.classes = j.at("classes").get<std::size_t>();
  c.predicates = j.at("predicates").get<std::size_t>();
  c.hidden = j.at("hidden").get<std::size_t>();
  c.layers = j.at("layers").get<std::size_t>();
  c.point_widths = j.at("point_widths").get<std::vector<std::size_t>>();
  c.max_points = j.at("max_points").get<std::size_t>();
  c.geometric_gate = j.at("geometric_gate").get<bool>();
  c.spatial_gate = j.at("spatial_gate").get<bool>();
  c.neighbor_residual = j.at("neighbor_residual").get<bool>();
  return c;
}

json train_json(const TrainConfig& c) {
  return {{"step_size", c.step_size},     {"beta1", c.beta1},
          {"beta2", c.beta2},             {"adam_epsilon", c.adam_epsilon},
          {"max_epochs", c.max_epochs},   {"patience", c.patience},
          {"batch_size", c.batch_size},   {"lambda_pred", c.lambda_pred},
          {"class_weighting", c.class_weighting}, {"cr_in_training", c.cr_in_training},
          {"seed", c.seed},               {"threads", c.threads}};
}

TrainConfig train_from(const json& j) {
  TrainConfig c;
  c.step_size = j.at("step_size").get<double>();
  c.beta1 = j.at("beta1").get<double>();
  c.beta2 = j.at("beta2").get<double>();
  c.adam_epsilon = j.at("adam_epsilon").get<double>();
  c.max_epochs = j.at("max_epochs").get<std::size_t>();
  c.patience = j.at("patience").get<std::size_t>();
  c.batch_size = j.at("batch_size").get<std::size_t>();
  c.lambda_pred = j.at("lambda_pred").get<double>();
  c.class_weighting = j.at("class_weighting").get<bool>();
  c.cr_in_training = j.at("cr_in_training").get<bool>();
  c.seed = j.at("seed").get<std::uint64_t>();
  c.threads = j.at("threads").get<std::size_t>();
  return c;
}

constexpr const char* kCheckpointFormat = "ssg-checkpoint";
constexpr int kCheckpointVersion = 1;

}  // namespace

void save_checkpoint(const ModelCheckpoint& ckpt, const std::filesystem::path& path) {
  json header;
  header["format"] = kCheckpointFormat;
  header["version"] = kCheckpointVersion;
  header["model"] = model_json(ckpt.model);
  header["train"] = train_json(ckpt.train);
  header["best_epoch"] = ckpt.best_epoch;
  json tensors = json::array();
  std::vector<unsigned char> blob;
  visit_params(ckpt.params, [&](const std::string& name, const ad::Matrix& m) {
    tensors.push_back({{"name", name}, {"rows", m.rows}, {"cols", m.cols}});
    for (double x : m.data) detail::put_f64(blob, x);
  });
  header["tensors"] = std::move(tensors);
  std::string text = header.dump() + "\n";
  std::vector<unsigned char> bytes(text.begin(), text.end());
  bytes.insert(bytes.end(), blob.begin(), blob.end());
  detail::write_bytes(path, bytes.data(), bytes.size());
}

ModelCheckpoint load_checkpoint(const std::filesystem::path& path) {
  const auto bytes = detail::read_bytes(path);
  const auto newline = std::find(bytes.begin(), bytes.end(), static_cast<unsigned char>('\n'));
  if (newline == bytes.end()) throw FormatError(path.string() + ": missing checkpoint header");
  json header;
  try {
    header = json::parse(bytes.begin(), newline);
  } catch (const json::exception& e) {
    throw FormatError(path.string() + ": malformed checkpoint header: " + e.what());
  }
  ModelCheckpoint ck;
  try {
    if (header.at("format") != kCheckpointFormat) throw FormatError(path.string() + ": not a checkpoint file");
    if (header.at("version").get<int>() != kCheckpointVersion)
      throw FormatError(path.string() + ": unsupported checkpoint version");
    ck.model = model_from(header.at("model"));
    ck.train = train_from(header.at("train"));
    ck.best_epoch = header.at("best_epoch").get<std::size_t>();
  } catch (const json::exception& e) {
    throw FormatError(path.string() + ": " + e.what());
  }
  validate(ck.model);
  ck.params = zero_params(ck.model);
  const auto& tensors = header.at("tensors");
  std::size_t index = 0;
  std::size_t offset = static_cast<std::size_t>(newline - bytes.begin()) + 1;
  visit_params(ck.params, [&](const std::string& name, ad::Matrix& m) {
    if (index >= tensors.size()) throw FormatError(path.string() + ": missing tensor " + name);
    const auto& t = tensors[index++];
    if (t.at("name").get<std::string>() != name || t.at("rows").get<std::size_t>() != m.rows ||
        t.at("cols").get<std::size_t>() != m.cols)
      throw FormatError(path.string() + ": tensor " + name + " does not match the model configuration");
    if (offset + 8 * m.size() > bytes.size()) throw FormatError(path.string() + ": truncated parameter data");
    for (double& x : m.data) {
      x = detail::get_f64(bytes.data() + offset);
      offset += 8;
    }
  });
  if (index != tensors.size()) throw FormatError(path.string() + ": unexpected extra tensors");
  if (offset != bytes.size()) throw FormatError(path.string() + ": trailing bytes after parameter data");
  return ck;
}

}  // namespace ssg
