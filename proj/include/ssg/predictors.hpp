#pragma once

// Node/edge classification heads, the training objective, the optimizer loop
// and checkpoint persistence.

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <span>
#include <utility>
#include <vector>

#include "ssg/autodiff.hpp"
#include "ssg/feature_init.hpp"
#include "ssg/model.hpp"
#include "ssg/rescore.hpp"
#include "ssg/rsn_gnn.hpp"
#include "ssg/scene.hpp"

namespace ssg {

// Everything about a scene that does not depend on the parameters.
struct PreparedScene {
  PreparedFeatures features;
  GraphTopology topology;
  ad::Matrix edge_descriptors;  // [E x 11]
  std::vector<std::pair<std::size_t, std::size_t>> edges;
  std::vector<std::vector<std::size_t>> neighbors;
  std::vector<int> node_targets;  // -1 when unlabeled
  std::vector<int> edge_targets;
};

PreparedScene prepare_scene(const SceneRecord& scene, const ModelConfig& cfg,
                            MissingViews missing = MissingViews::strict);

struct SceneLogits {
  ad::Value nodes;  // [M x C]
  ad::Value edges;  // [E x P]
};

SceneLogits predict_logits(const GraphState& state, const PredictorParams<ad::Value>& heads);

// Full forward pass: feature init, input projection, message passing, heads.
SceneLogits forward_scene(ad::Tape& tape, const PreparedScene& scene, const BoundParams& params,
                          const ModelConfig& cfg);

struct LossWeights {
  double lambda_pred = 1.0;
  std::vector<double> node_class;  // empty: unweighted
  std::vector<double> edge_class;
};

// Mean node cross entropy + lambda_pred * mean edge cross entropy over the
// labeled entries (target >= 0). Out-of-range targets throw.
ad::Value loss(const SceneLogits& logits, std::span<const int> node_targets, std::span<const int> edge_targets,
               const LossWeights& weights = {});

struct TrainConfig {
  double step_size = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double adam_epsilon = 1e-8;
  std::size_t max_epochs = 100;
  std::size_t patience = 10;  // epochs without validation improvement
  std::size_t batch_size = 4; // scenes per optimizer step
  double lambda_pred = 1.0;
  bool class_weighting = false;  // inverse-frequency class weights
  bool cr_in_training = false;
  std::uint64_t seed = 0;
  std::size_t threads = 0;  // 0: SSG_THREADS, else 1

  bool operator==(const TrainConfig&) const = default;
};

void validate(const TrainConfig& cfg);

struct ModelCheckpoint {
  ModelConfig model;
  TrainConfig train;
  ModelParams params;
  std::size_t best_epoch = 0;
};

struct EpochRecord {
  std::size_t epoch = 0;
  double train_loss = 0.0;
  double val_recall_rel = 0.0;
  double val_recall_obj = 0.0;
  double val_recall_pred = 0.0;
  bool operator==(const EpochRecord&) const = default;
};

struct TrainResult {
  ModelCheckpoint checkpoint;
  std::vector<EpochRecord> history;
};

// First-order adaptive-moment optimizer over flattened parameters.
class Adam {
 public:
  explicit Adam(const TrainConfig& cfg, std::size_t size);
  void step(ModelParams& params, std::span<const double> grad);

 private:
  double lr_, b1_, b2_, eps_;
  std::size_t t_ = 0;
  std::vector<double> m_, v_;
};

using EpochCallback = std::function<void(const EpochRecord&)>;

// Selects the checkpoint with the best validation relationship recall and
// stops after `patience` epochs without improvement. `stats` is required
// when cr_in_training is set. Throws NumericError naming the epoch on
// divergence.
TrainResult train(const Corpus& train_set, const Corpus& val_set, const ModelConfig& model_cfg,
                  const TrainConfig& cfg, const CooccurrenceStats* stats = nullptr,
                  const EpochCallback& on_epoch = {});

// Inference without gradient tracking.
struct LogitMatrices {
  ad::Matrix nodes;
  ad::Matrix edges;
};
LogitMatrices infer_logits(const ModelParams& params, const ModelConfig& cfg, const PreparedScene& scene);

// JSON header line followed by the parameters as little-endian 64-bit reals
// in header order.
void save_checkpoint(const ModelCheckpoint& ckpt, const std::filesystem::path& path);
ModelCheckpoint load_checkpoint(const std::filesystem::path& path);

}  // namespace ssg
