#pragma once

// Batch commands wiring generation, statistics, training, evaluation and
// prediction together, and the flat key=value run configuration they share.

#include <filesystem>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "ssg/feature_init.hpp"
#include "ssg/metrics.hpp"
#include "ssg/model.hpp"
#include "ssg/predictors.hpp"
#include "ssg/rescore.hpp"
#include "ssg/scene.hpp"
#include "ssg/synthetic.hpp"

namespace ssg {

struct RunConfig {
  GenConfig gen;
  ModelConfig model;  // feature_dim, classes and predicates come from the data
  TrainConfig train;
  bool no_cr = false;
  std::optional<double> fixed_alpha;
  EdgeCombine combine = EdgeCombine::product;
  NeighborEvidence neighbor_evidence = NeighborEvidence::argmax;
  bool exclude_none = false;
  double drop_top_frac = 0.0;
  MissingViews missing_views = MissingViews::strict;

  // Inputs and outputs.
  std::string corpus;      // eval / stats input, train set for train
  std::string val_corpus;  // train: validation set
  std::string checkpoint;
  std::string stats;
  std::string scene;
  std::string out;

  RescoreOptions rescore_options() const { return {fixed_alpha, combine, neighbor_evidence}; }
};

// Every configuration key, in a fixed order. Keys double as CLI flag names.
struct ConfigKey {
  std::string name;
  std::string help;
  bool boolean = false;
};
const std::vector<ConfigKey>& config_keys();

// Throws ConfigError on unknown keys or malformed values.
void apply_setting(RunConfig& cfg, const std::string& key, const std::string& value);
std::string get_setting(const RunConfig& cfg, const std::string& key);
// `key = value` lines; blank lines and lines starting with '#' are ignored.
void apply_config_text(RunConfig& cfg, const std::string& text);
RunConfig load_run_config(const std::filesystem::path& path);
std::string dump_run_config(const RunConfig& cfg);
// Range checks that span several keys.
void validate(const RunConfig& cfg);

// Base and rescored distributions for one scene. Without rescoring the
// refined fields repeat the base ones.
struct ScenePrediction {
  std::vector<std::pair<std::size_t, std::size_t>> edges;
  NodeRescore nodes;
  EdgeRescore edges_out;
  bool rescored = false;
};

ScenePrediction predict_from_logits(const LogitMatrices& logits, const PreparedScene& scene,
                                    const RescorePrior* prior, const RescoreOptions& options = {});
ScenePrediction predict_scene(const ModelCheckpoint& ckpt, const SceneRecord& scene, const RescorePrior* prior,
                              const RescoreOptions& options = {}, MissingViews missing = MissingViews::strict);
std::string prediction_json(const SceneRecord& scene, const ScenePrediction& prediction);

// Logits for every scene of `corpus`, computed once so that several
// rescoring variants can be evaluated against the same network outputs.
struct CorpusLogits {
  std::vector<PreparedScene> scenes;
  std::vector<LogitMatrices> logits;
};
CorpusLogits infer_corpus(const ModelCheckpoint& ckpt, const Corpus& corpus, std::size_t threads = 0,
                          MissingViews missing = MissingViews::strict);

// `prior` null evaluates the base predictions.
EvalReport evaluate_logits(const CorpusLogits& outputs, std::size_t classes, std::size_t predicates,
                           const RescorePrior* prior, const RescoreOptions& options, bool exclude_none);
EvalReport evaluate_corpus(const ModelCheckpoint& ckpt, const Corpus& corpus, const RescorePrior* prior,
                           const RescoreOptions& options, bool exclude_none);

ModelConfig model_config_for(const RunConfig& cfg, const Corpus& corpus);

// Commands. Each writes its declared outputs and returns a one-line summary.
std::string cmd_gen(const RunConfig& cfg);
std::string cmd_stats(const RunConfig& cfg);
std::string cmd_train(const RunConfig& cfg);
std::string cmd_eval(const RunConfig& cfg);
std::string cmd_predict(const RunConfig& cfg);
std::string cmd_ablate_stats(const RunConfig& cfg);

}  // namespace ssg
