#pragma once

// Confidence rescoring with co-occurrence statistics.
//
// Training-set counts give column-stochastic conditionals P(o_i | o_j),
// P(r | o_subj) and P(r | o_obj). A prediction is refined by blending its
// logits with inverse-softmax images of those conditionals, weighted by the
// predictor's own confidence (max softmax probability):
//
//   node:  softmax(a_i * z_i + (1 - a_i) * sum_j a_j * g(P(. | c_j)))
//   edge:  softmax(a_ij * z_ij + (1 - a_ij) * (a_i g(P(. | c_i))) (*) (a_j g(P(. | c_j))))
//
// with g the mean-centered log and (*) elementwise (or "+" in sum mode).

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "ssg/autodiff.hpp"
#include "ssg/scene.hpp"

namespace ssg {

struct CountTable {
  std::size_t rows = 0;
  std::size_t cols = 0;
  std::vector<std::int64_t> counts;

  CountTable() = default;
  CountTable(std::size_t r, std::size_t c) : rows(r), cols(c), counts(r * c, 0) {}
  std::int64_t& operator()(std::size_t r, std::size_t c) { return counts[r * cols + c]; }
  std::int64_t operator()(std::size_t r, std::size_t c) const { return counts[r * cols + c]; }
  bool operator==(const CountTable&) const = default;
};

struct TripletCount {
  std::size_t subject = 0;
  std::size_t predicate = 0;
  std::size_t object = 0;
  std::int64_t count = 0;
  bool operator==(const TripletCount&) const = default;
};

struct CooccurrenceStats {
  std::vector<std::string> classes;
  std::vector<std::string> predicates;
  double epsilon = 1.0;       // additive smoothing applied before normalization
  CountTable node_pair;       // [C x C], row = subject class, column = object class
  CountTable pred_given_subj; // [P x C]
  CountTable pred_given_obj;  // [P x C]
  // Sparse (subject, predicate, object) counts, sorted; the source of the
  // marginal tables and the unit of ablation.
  std::vector<TripletCount> triplets;

  bool operator==(const CooccurrenceStats&) const = default;
};

enum class StatKind { node_pair, pred_given_subj, pred_given_obj };

// Counts every directed edge whose predicate and both endpoint classes are
// labeled. Throws ValidationError when no such edge exists.
CooccurrenceStats compute_stats(std::span<const SceneRecord> scenes);
CooccurrenceStats compute_stats(const Corpus& corpus);

// Smoothed, column-normalized conditional table; each column sums to 1.
ad::Matrix conditional(const CooccurrenceStats& stats, StatKind kind);

// Mean-centered log: a right inverse of softmax. Entries must be positive.
std::vector<double> inverse_softmax(std::span<const double> p);

std::vector<double> softmax(std::span<const double> logits);
// Row-wise softmax of a logit matrix.
ad::Matrix softmax_rows(const ad::Matrix& logits);

enum class EdgeCombine { product, sum };
enum class NeighborEvidence {
  argmax,       // conditional column of the neighbor's argmax class, weighted by its confidence
  expectation,  // expectation of the columns under the neighbor's distribution
};

struct RescoreOptions {
  std::optional<double> fixed_alpha;  // replaces every confidence when set
  EdgeCombine combine = EdgeCombine::product;
  NeighborEvidence neighbor_evidence = NeighborEvidence::argmax;
};

// Confidences at or above this are treated as exactly 1.
inline constexpr double kCertainConfidence = 1.0 - 1e-12;

// Per-row decomposition refined = softmax(alpha * logits + (1 - alpha) * prior).
// Shared by inference and by training with rescoring in the loss.
struct RescoreTerms {
  std::vector<double> alpha;
  ad::Matrix prior;  // prior logit rows, already including neighbor confidences
};

struct NodeRescore {
  ad::Matrix base;     // [M x C] softmax of the logits
  ad::Matrix refined;  // [M x C]
  std::vector<double> confidence;          // alpha_v per node
  std::vector<std::size_t> base_class;
  std::vector<std::size_t> refined_class;
};

struct EdgeRescore {
  ad::Matrix base;     // [E x P]
  ad::Matrix refined;  // [E x P]
  std::vector<double> confidence;
  std::vector<std::size_t> base_class;
  std::vector<std::size_t> refined_class;
};

// Precomputed inverse-softmax columns of the three conditionals.
class RescorePrior {
 public:
  explicit RescorePrior(const CooccurrenceStats& stats);
  std::size_t classes() const { return classes_; }
  std::size_t predicates() const { return predicates_; }
  // g(P(o_i | o_j = c)) as a length-C vector.
  std::span<const double> node_column(std::size_t c) const;
  std::span<const double> subj_column(std::size_t c) const;
  std::span<const double> obj_column(std::size_t c) const;

 private:
  std::size_t classes_ = 0;
  std::size_t predicates_ = 0;
  std::vector<double> node_;  // C columns of length C
  std::vector<double> subj_;  // C columns of length P
  std::vector<double> obj_;   // C columns of length P
};

RescoreTerms node_rescore_terms(const ad::Matrix& base_probs, const std::vector<std::vector<std::size_t>>& neighbors,
                                const RescorePrior& prior, const RescoreOptions& options = {});
RescoreTerms edge_rescore_terms(const ad::Matrix& base_edge_probs,
                                std::span<const std::pair<std::size_t, std::size_t>> edges,
                                const ad::Matrix& node_probs, const RescorePrior& prior,
                                const RescoreOptions& options = {});

NodeRescore rescore_nodes(const ad::Matrix& node_logits, const std::vector<std::vector<std::size_t>>& neighbors,
                          const RescorePrior& prior, const RescoreOptions& options = {});
// Conditions on the refined node distributions in `nodes`.
EdgeRescore rescore_edges(const ad::Matrix& edge_logits, std::span<const std::pair<std::size_t, std::size_t>> edges,
                          const NodeRescore& nodes, const RescorePrior& prior, const RescoreOptions& options = {});

// Throws ValidationError when the vocabularies differ.
void check_vocabulary(const CooccurrenceStats& stats, const std::vector<std::string>& classes,
                      const std::vector<std::string>& predicates);

void save_stats(const CooccurrenceStats& stats, const std::filesystem::path& path);
CooccurrenceStats load_stats(const std::filesystem::path& path);

// Zeroes the floor(fraction * n) most frequent of the n observed triplets
// and removes their mass from the marginal tables.
CooccurrenceStats ablate_stats(const CooccurrenceStats& stats, double drop_top_fraction);

}  // namespace ssg
