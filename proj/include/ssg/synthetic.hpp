#pragma once

// Seeded generator of synthetic multi-view scene corpora with known class
// contexts, predicate tables and background contamination.

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <vector>

#include "ssg/autodiff.hpp"
#include "ssg/metrics.hpp"
#include "ssg/random.hpp"
#include "ssg/scene.hpp"

namespace ssg {

enum class Contamination {
  mask,  // beta ~ U(0, beta_max) * (1 - mask_quality)
  bbox,  // beta ~ U(0, beta_max)
};

enum class PredicateTable {
  concentrated,  // per (subject, object) pair, Dirichlet(predicate_concentration)
  joint,         // (subject + object) mod P, so neither endpoint alone is informative
  given,         // `table` as supplied
};

struct GenConfig {
  std::uint64_t seed = 0;
  std::size_t classes = 10;
  std::size_t predicates = 5;  // including "none"
  std::size_t feature_dim = 32;
  std::size_t train_scenes = 200;
  std::size_t val_scenes = 50;
  std::size_t test_scenes = 50;
  std::size_t min_nodes = 8;
  std::size_t max_nodes = 16;
  double edge_radius = 2.5;
  double room_size = 6.0;
  double prototype_scale = 0.25;  // norm of each class prototype
  // Classes 2i and 2i+1 are siblings: the odd prototype is the normalized
  // blend sibling_similarity * mu_2i + (1 - sibling_similarity) * fresh; box
  // sizes are blended the same way.
  double sibling_similarity = 0.0;
  // Only the first sibling_pairs pairs are siblings; 0 means every pair.
  std::size_t sibling_pairs = 0;
  double feature_noise = 0.3;    // per-dimension standard deviation
  Contamination contamination = Contamination::mask;
  double beta_max = 0.5;
  double mask_quality = 0.8;
  PredicateTable table_mode = PredicateTable::concentrated;
  double predicate_concentration = 0.2;
  double joint_noise = 0.1;  // mass spread uniformly in joint mode
  // [C*C x P], row subject * C + object; only read in `given` mode.
  std::vector<double> table;
  std::size_t contexts = 5;
  // Share of a context's mass on its own classes (class c belongs to context c mod K).
  double context_purity = 0.9;
  // Context k is chosen with probability proportional to (k + 1)^-context_skew.
  double context_skew = 0.0;
  // When positive, contexts are instead drawn from Dirichlet(context_concentration).
  double context_concentration = 0.0;
  double size_jitter = 0.3;  // relative per-instance box scale noise
  std::size_t min_points = 64;
  std::size_t max_points = 256;
  std::size_t min_views = 2;
  std::size_t max_views = 6;
  std::size_t scene_views = 8;  // views per scene to draw covisibility from
  std::size_t threads = 0;

  bool operator==(const GenConfig&) const = default;
};

void validate(const GenConfig& cfg);

struct GroundTruthModel {
  std::vector<std::string> classes;
  std::vector<std::string> predicates;
  ad::Matrix prototypes;     // [C x D]
  std::vector<double> background;  // [D]
  ad::Matrix class_dims;     // [C x 3] mean box extents
  ad::Matrix contexts;       // [K x C], rows are distributions
  std::vector<double> context_weights;  // [K]
  ad::Matrix predicate_table;  // [C*C x P], row subject * C + object

  bool operator==(const GroundTruthModel&) const = default;
  // Expected class frequency of a node: sum_k w_k * contexts[k].
  std::vector<double> class_marginal() const;
};

struct GeneratedCorpus {
  Corpus train;
  Corpus val;
  Corpus test;
  GroundTruthModel model;
};

GroundTruthModel make_model(const GenConfig& cfg);
// Draws one view's contamination weight.
double draw_contamination(Rng& rng, const GenConfig& cfg);
// Scene `index` (counted across splits) of the corpus defined by cfg.
SceneRecord generate_scene(const GenConfig& cfg, const GroundTruthModel& model, std::size_t index,
                           const std::string& scene_id);
GeneratedCorpus gen_corpus(const GenConfig& cfg);

// Writes train/, val/, test/ corpora and model.json under `dir`.
void save_generated(const GeneratedCorpus& gen, const std::filesystem::path& dir);
void save_model(const GroundTruthModel& model, const std::filesystem::path& path);
GroundTruthModel load_model(const std::filesystem::path& path);

// Nearest normalized prototype for every node's mean view feature and the
// table argmax given the true endpoint classes for every edge.
EvalReport bayes_reference(const Corpus& corpus, const GroundTruthModel& model, bool exclude_none = false);

}  // namespace ssg
