#include "ssg/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>

#include "json.hpp"
#include "ssg/error.hpp"

namespace ssg {

namespace {

void finish(RecallResult& r) {
  r.recall = r.total ? static_cast<double>(r.correct) / static_cast<double>(r.total) : 0.0;
  double sum = 0.0;
  std::size_t present = 0;
  for (const auto& c : r.per_class) {
    if (c.total == 0) continue;
    sum += c.recall();
    ++present;
  }
  r.mrecall = present ? sum / static_cast<double>(present) : 0.0;
}

std::size_t checked_label(int label, std::size_t limit, const char* what) {
  if (label < 0 || static_cast<std::size_t>(label) >= limit)
    throw ValidationError(std::string(what) + " label " + std::to_string(label) + " out of range");
  return static_cast<std::size_t>(label);
}

}  // namespace

RecallResult eval_objects(std::span<const LabeledGraph> graphs, std::size_t classes) {
  RecallResult r;
  r.per_class.resize(classes);
  for (const auto& g : graphs) {
    if (g.node_pred.size() != g.node_gt.size()) throw ShapeError("eval_objects: prediction/label count mismatch");
    for (std::size_t i = 0; i < g.node_gt.size(); ++i) {
      if (!g.node_gt[i]) continue;
      const std::size_t c = checked_label(*g.node_gt[i], classes, "object");
      const bool ok = g.node_pred[i] == c;
      ++r.total;
      ++r.per_class[c].total;
      if (ok) {
        ++r.correct;
        ++r.per_class[c].correct;
      }
    }
  }
  if (r.total == 0) throw ValidationError("eval_objects: no labeled nodes");
  finish(r);
  return r;
}

RecallResult eval_predicates(std::span<const LabeledGraph> graphs, std::size_t predicates, bool exclude_none) {
  RecallResult r;
  r.per_class.resize(predicates);
  for (const auto& g : graphs) {
    if (g.edge_pred.size() != g.edge_gt.size()) throw ShapeError("eval_predicates: prediction/label count mismatch");
    for (std::size_t k = 0; k < g.edge_gt.size(); ++k) {
      if (!g.edge_gt[k]) continue;
      const std::size_t p = checked_label(*g.edge_gt[k], predicates, "predicate");
      if (exclude_none && p == 0) continue;
      ++r.total;
      ++r.per_class[p].total;
      if (g.edge_pred[k] == p) {
        ++r.correct;
        ++r.per_class[p].correct;
      }
    }
  }
  if (r.total == 0) throw ValidationError("eval_predicates: no labeled edges to evaluate");
  finish(r);
  return r;
}

TripletResult eval_triplets(std::span<const LabeledGraph> graphs, bool exclude_none) {
  TripletResult r;
  for (const auto& g : graphs) {
    if (g.edges.size() != g.edge_gt.size() || g.edge_pred.size() != g.edge_gt.size())
      throw ShapeError("eval_triplets: edge count mismatch");
    for (std::size_t k = 0; k < g.edge_gt.size(); ++k) {
      if (!g.edge_gt[k]) continue;
      if (exclude_none && *g.edge_gt[k] == 0) continue;
      const auto [s, o] = g.edges[k];
      if (s >= g.node_gt.size() || o >= g.node_gt.size()) throw ShapeError("eval_triplets: endpoint out of range");
      if (!g.node_gt[s] || !g.node_gt[o]) continue;
      ++r.total;
      const bool ok = g.node_pred[s] == static_cast<std::size_t>(*g.node_gt[s]) &&
                      g.node_pred[o] == static_cast<std::size_t>(*g.node_gt[o]) &&
                      g.edge_pred[k] == static_cast<std::size_t>(*g.edge_gt[k]);
      if (ok) ++r.correct;
    }
  }
  if (r.total == 0) throw ValidationError("eval_triplets: no labeled edges to evaluate");
  r.recall = static_cast<double>(r.correct) / static_cast<double>(r.total);
  return r;
}

Quartiles quartiles(std::vector<double> v) {
  Quartiles q;
  q.count = v.size();
  if (v.empty()) return q;
  std::sort(v.begin(), v.end());
  auto at = [&](double f) {
    const double pos = f * static_cast<double>(v.size() - 1);
    const auto lo = static_cast<std::size_t>(std::floor(pos));
    const std::size_t hi = std::min(lo + 1, v.size() - 1);
    return v[lo] + (pos - static_cast<double>(lo)) * (v[hi] - v[lo]);
  };
  q.q1 = at(0.25);
  q.median = at(0.5);
  q.q3 = at(0.75);
  return q;
}

CalibrationReport calibration_report(const ad::Matrix& base, const ad::Matrix& refined, std::span<const std::size_t> gt) {
  if (base.rows != gt.size() || refined.rows != gt.size() || base.cols != refined.cols)
    throw ShapeError("calibration_report: distribution and label shapes differ");
  CalibrationReport r;
  for (std::size_t b = 0; b < kConfidenceBins; ++b)
    r.bins.push_back({static_cast<double>(b) / kConfidenceBins, static_cast<double>(b + 1) / kConfidenceBins, 0, 0});
  std::vector<double> before, after;
  double low_before = 0.0, low_after = 0.0;
  for (std::size_t i = 0; i < gt.size(); ++i) {
    if (gt[i] >= base.cols) throw ValidationError("calibration_report: label out of range");
    std::size_t arg = 0, base_arg = 0;
    for (std::size_t k = 1; k < refined.cols; ++k) {
      if (refined(i, k) > refined(i, arg)) arg = k;
      if (base(i, k) > base(i, base_arg)) base_arg = k;
    }
    const double conf = refined(i, arg);
    const auto bin = std::min<std::size_t>(kConfidenceBins - 1, static_cast<std::size_t>(std::floor(conf * kConfidenceBins)));
    ++r.bins[bin].count;
    if (arg == gt[i]) ++r.bins[bin].correct;
    before.push_back(base(i, gt[i]));
    after.push_back(refined(i, gt[i]));
    if (base(i, base_arg) < kLowConfidence) {
      ++r.low_confidence_count;
      low_before += base(i, gt[i]);
      low_after += refined(i, gt[i]);
    }
  }
  if (r.low_confidence_count) {
    r.low_confidence_mean_before = low_before / static_cast<double>(r.low_confidence_count);
    r.low_confidence_mean_after = low_after / static_cast<double>(r.low_confidence_count);
  }
  r.before = quartiles(std::move(before));
  r.after = quartiles(std::move(after));
  return r;
}

EvalReport evaluate(std::span<const LabeledGraph> graphs, std::size_t classes, std::size_t predicates, bool exclude_none) {
  EvalReport r;
  r.exclude_none = exclude_none;
  r.objects = eval_objects(graphs, classes);
  r.predicates = eval_predicates(graphs, predicates, exclude_none);
  r.triplets = eval_triplets(graphs, exclude_none);
  r.recall_obj = r.objects.recall;
  r.mrecall_obj = r.objects.mrecall;
  r.recall_pred = r.predicates.recall;
  r.mrecall_pred = r.predicates.mrecall;
  r.recall_rel = r.triplets.recall;
  return r;
}

namespace {

nlohmann::json per_class_json(const RecallResult& r, const std::vector<std::string>& names) {
  nlohmann::json out = nlohmann::json::array();
  for (std::size_t c = 0; c < r.per_class.size(); ++c) {
    nlohmann::json row = {{"index", c},
                          {"correct", r.per_class[c].correct},
                          {"total", r.per_class[c].total},
                          {"recall", r.per_class[c].total ? nlohmann::json(r.per_class[c].recall()) : nlohmann::json(nullptr)}};
    if (c < names.size()) row["name"] = names[c];
    out.push_back(std::move(row));
  }
  return out;
}

nlohmann::json quartile_json(const Quartiles& q) {
  return {{"count", q.count}, {"q1", q.q1}, {"median", q.median}, {"q3", q.q3}};
}

}  // namespace

std::string to_json(const EvalReport& r, const std::vector<std::string>& classes,
                    const std::vector<std::string>& predicates) {
  nlohmann::json doc;
  doc["recall_rel"] = r.recall_rel;
  doc["recall_obj"] = r.recall_obj;
  doc["recall_pred"] = r.recall_pred;
  doc["mrecall_obj"] = r.mrecall_obj;
  doc["mrecall_pred"] = r.mrecall_pred;
  doc["exclude_none"] = r.exclude_none;
  doc["counts"] = {{"objects", {r.objects.correct, r.objects.total}},
                   {"predicates", {r.predicates.correct, r.predicates.total}},
                   {"triplets", {r.triplets.correct, r.triplets.total}}};
  doc["per_class_obj"] = per_class_json(r.objects, classes);
  doc["per_class_pred"] = per_class_json(r.predicates, predicates);
  nlohmann::json bins = nlohmann::json::array();
  for (const auto& b : r.calibration.bins)
    bins.push_back({{"lower", b.lower}, {"upper", b.upper}, {"count", b.count}, {"accuracy", b.accuracy()}});
  doc["confidence_histogram"] = std::move(bins);
  doc["correct_class_quartiles"] = {{"before_cr", quartile_json(r.calibration.before)},
                                    {"after_cr", quartile_json(r.calibration.after)}};
  doc["low_confidence"] = {{"threshold", kLowConfidence},
                           {"count", r.calibration.low_confidence_count},
                           {"mean_before_cr", r.calibration.low_confidence_mean_before},
                           {"mean_after_cr", r.calibration.low_confidence_mean_after}};
  return doc.dump(2) + "\n";
}

std::string format_table(const EvalReport& r, const std::string& label) {
  char buf[512];
  std::snprintf(buf, sizeof(buf),
                "%-16s | %-23s | %-15s\n"
                "%-16s | %6s %6s %6s    | %6s %6s\n"
                "%-16s | %6.1f %6.1f %6.1f    | %6.1f %6.1f\n",
                "", "Recall%", "mRecall%", "Method", "Rel", "Obj.", "Pred.", "Obj.", "Pred", label.c_str(),
                100 * r.recall_rel, 100 * r.recall_obj, 100 * r.recall_pred, 100 * r.mrecall_obj, 100 * r.mrecall_pred);
  return buf;
}

}  // namespace ssg
