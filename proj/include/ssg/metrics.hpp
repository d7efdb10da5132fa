#pragma once

// Top-1 recall and mean recall for objects, predicates and relationship
// triplets, plus a confidence histogram and correct-class probability
// quartiles.

#include <cstddef>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "ssg/autodiff.hpp"

namespace ssg {

// Predicted argmaxes and ground truth for one scene graph.
struct LabeledGraph {
  std::vector<std::size_t> node_pred;
  std::vector<std::optional<int>> node_gt;
  std::vector<std::pair<std::size_t, std::size_t>> edges;
  std::vector<std::size_t> edge_pred;
  std::vector<std::optional<int>> edge_gt;
};

struct ClassRecall {
  std::size_t correct = 0;
  std::size_t total = 0;
  double recall() const { return total ? static_cast<double>(correct) / static_cast<double>(total) : 0.0; }
};

struct RecallResult {
  std::size_t correct = 0;
  std::size_t total = 0;
  double recall = 0.0;
  // Unweighted mean over classes with at least one ground-truth instance.
  double mrecall = 0.0;
  std::vector<ClassRecall> per_class;
};

struct TripletResult {
  std::size_t correct = 0;
  std::size_t total = 0;
  double recall = 0.0;
};

// Throws ValidationError when no node carries a label.
RecallResult eval_objects(std::span<const LabeledGraph> graphs, std::size_t classes);
// With `exclude_none`, edges labeled 0 ("none") leave numerator and
// denominator. Throws ValidationError when no labeled edge remains.
RecallResult eval_predicates(std::span<const LabeledGraph> graphs, std::size_t predicates, bool exclude_none);
// An edge is correct iff both endpoint classes and the predicate match.
// Edges whose endpoints are unlabeled are skipped.
TripletResult eval_triplets(std::span<const LabeledGraph> graphs, bool exclude_none);

struct HistogramBin {
  double lower = 0.0;
  double upper = 0.0;
  std::size_t count = 0;
  std::size_t correct = 0;
  double accuracy() const { return count ? static_cast<double>(correct) / static_cast<double>(count) : 0.0; }
};

struct Quartiles {
  std::size_t count = 0;
  double q1 = 0.0;
  double median = 0.0;
  double q3 = 0.0;
};

inline constexpr std::size_t kConfidenceBins = 10;
inline constexpr double kLowConfidence = 0.5;

struct CalibrationReport {
  std::vector<HistogramBin> bins;  // [k/10, (k+1)/10); the last bin includes 1.0
  Quartiles before;                // correct-class probability, base distributions
  Quartiles after;                 // correct-class probability, refined distributions
  // Mean correct-class probability over instances whose base confidence is
  // below kLowConfidence.
  std::size_t low_confidence_count = 0;
  double low_confidence_mean_before = 0.0;
  double low_confidence_mean_after = 0.0;
};

// Linear-interpolation quantiles (numpy's default). Empty input gives zeros.
Quartiles quartiles(std::vector<double> values);

// Rows of `base` and `refined` are distributions for labeled instances with
// ground truth `gt`. The histogram bins the refined max probability.
CalibrationReport calibration_report(const ad::Matrix& base, const ad::Matrix& refined, std::span<const std::size_t> gt);

struct EvalReport {
  double recall_rel = 0.0;
  double recall_obj = 0.0;
  double recall_pred = 0.0;
  double mrecall_obj = 0.0;
  double mrecall_pred = 0.0;
  RecallResult objects;
  RecallResult predicates;
  TripletResult triplets;
  CalibrationReport calibration;
  bool exclude_none = false;
};

EvalReport evaluate(std::span<const LabeledGraph> graphs, std::size_t classes, std::size_t predicates, bool exclude_none);

std::string to_json(const EvalReport& report, const std::vector<std::string>& classes = {},
                    const std::vector<std::string>& predicates = {});
// Fixed-width table: Rel | Obj | Pred recall, then Obj | Pred mean recall, in percent.
std::string format_table(const EvalReport& report, const std::string& label = "model");

}  // namespace ssg
