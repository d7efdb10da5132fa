#include "ssg/rescore.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <tuple>

#include "binary_io.hpp"
#include "json.hpp"
#include "ssg/error.hpp"

namespace ssg {

using nlohmann::json;

// ---- statistics -----------------------------------------------------------

CooccurrenceStats compute_stats(std::span<const SceneRecord> scenes) {
  if (scenes.empty()) throw ValidationError("compute_stats: empty corpus");
  CooccurrenceStats st;
  st.classes = scenes[0].classes;
  st.predicates = scenes[0].predicates;
  const std::size_t c = st.classes.size(), p = st.predicates.size();
  st.node_pair = CountTable(c, c);
  st.pred_given_subj = CountTable(p, c);
  st.pred_given_obj = CountTable(p, c);
  std::map<std::tuple<std::size_t, std::size_t, std::size_t>, std::int64_t> triplets;
  for (const auto& s : scenes) {
    if (s.classes != st.classes || s.predicates != st.predicates)
      throw ValidationError("compute_stats: scene '" + s.scene_id + "' has a different vocabulary");
    const auto idx = s.edge_index();
    for (std::size_t k = 0; k < s.edges.size(); ++k) {
      const auto& e = s.edges[k];
      const auto& a = s.nodes[idx[k].first].gt_class;
      const auto& b = s.nodes[idx[k].second].gt_class;
      if (!e.gt_predicate || !a || !b) continue;
      const auto r = static_cast<std::size_t>(*e.gt_predicate);
      const auto oi = static_cast<std::size_t>(*a), oj = static_cast<std::size_t>(*b);
      st.node_pair(oi, oj) += 1;
      st.pred_given_subj(r, oi) += 1;
      st.pred_given_obj(r, oj) += 1;
      triplets[{oi, r, oj}] += 1;
    }
  }
  if (triplets.empty()) throw ValidationError("compute_stats: corpus has no labeled edges");
  for (const auto& [key, n] : triplets)
    st.triplets.push_back({std::get<0>(key), std::get<1>(key), std::get<2>(key), n});
  return st;
}

CooccurrenceStats compute_stats(const Corpus& corpus) { return compute_stats(std::span<const SceneRecord>(corpus.scenes)); }

ad::Matrix conditional(const CooccurrenceStats& stats, StatKind kind) {
  const CountTable& t = kind == StatKind::node_pair         ? stats.node_pair
                        : kind == StatKind::pred_given_subj ? stats.pred_given_subj
                                                            : stats.pred_given_obj;
  ad::Matrix m(t.rows, t.cols);
  for (std::size_t j = 0; j < t.cols; ++j) {
    double total = 0.0;
    for (std::size_t i = 0; i < t.rows; ++i) total += (m(i, j) = static_cast<double>(t(i, j)) + stats.epsilon);
    if (!(total > 0.0)) {
      // Only reachable with epsilon = 0 and an unobserved column.
      for (std::size_t i = 0; i < t.rows; ++i) m(i, j) = 1.0 / static_cast<double>(t.rows);
      continue;
    }
    for (std::size_t i = 0; i < t.rows; ++i) m(i, j) /= total;
  }
  return m;
}

std::vector<double> inverse_softmax(std::span<const double> p) {
  std::vector<double> out(p.size());
  double mean = 0.0;
  for (std::size_t i = 0; i < p.size(); ++i) {
    if (!(p[i] > 0.0)) throw NumericError("inverse_softmax: probabilities must be positive");
    mean += (out[i] = std::log(p[i]));
  }
  mean /= static_cast<double>(p.size());
  for (double& x : out) x -= mean;
  return out;
}

std::vector<double> softmax(std::span<const double> logits) {
  std::vector<double> out(logits.size());
  if (logits.empty()) return out;
  const double mx = *std::max_element(logits.begin(), logits.end());
  double z = 0.0;
  for (std::size_t i = 0; i < logits.size(); ++i) z += (out[i] = std::exp(logits[i] - mx));
  for (double& x : out) x /= z;
  return out;
}

ad::Matrix softmax_rows(const ad::Matrix& logits) {
  ad::Matrix out(logits.rows, logits.cols);
  for (std::size_t i = 0; i < logits.rows; ++i) {
    const auto row = softmax(std::span<const double>(logits.data).subspan(i * logits.cols, logits.cols));
    std::copy(row.begin(), row.end(), out.data.begin() + static_cast<std::ptrdiff_t>(i * logits.cols));
  }
  return out;
}

// ---- rescoring ------------------------------------------------------------

namespace {

std::span<const double> row(const ad::Matrix& m, std::size_t i) {
  return std::span<const double>(m.data).subspan(i * m.cols, m.cols);
}

std::size_t argmax(std::span<const double> v) {
  std::size_t best = 0;
  for (std::size_t i = 1; i < v.size(); ++i)
    if (v[i] > v[best]) best = i;
  return best;
}

double confidence_of(std::span<const double> probs, const RescoreOptions& opt) {
  if (opt.fixed_alpha) return *opt.fixed_alpha;
  const double a = probs[argmax(probs)];
  return a >= kCertainConfidence ? 1.0 : a;
}

void check_alpha(const RescoreOptions& opt) {
  if (opt.fixed_alpha && !(*opt.fixed_alpha > 0.0 && *opt.fixed_alpha <= 1.0))
    throw ConfigError("fixed alpha must lie in (0, 1]");
}

std::vector<double> columns_of(const ad::Matrix& cond) {
  // Column j of `cond` mapped through inverse_softmax, stored contiguously.
  std::vector<double> out;
  out.reserve(cond.size());
  std::vector<double> col(cond.rows);
  for (std::size_t j = 0; j < cond.cols; ++j) {
    for (std::size_t i = 0; i < cond.rows; ++i) col[i] = cond(i, j);
    const auto g = inverse_softmax(col);
    out.insert(out.end(), g.begin(), g.end());
  }
  return out;
}

// Evidence vector (length `len`) from a node distribution: a single column
// or an expectation over columns.
std::vector<double> evidence(std::span<const double> probs, std::size_t len,
                             std::span<const double> (RescorePrior::*column)(std::size_t) const,
                             const RescorePrior& prior, NeighborEvidence mode) {
  std::vector<double> out(len, 0.0);
  if (mode == NeighborEvidence::argmax) {
    const auto col = (prior.*column)(argmax(probs));
    std::copy(col.begin(), col.end(), out.begin());
    return out;
  }
  for (std::size_t c = 0; c < probs.size(); ++c) {
    const auto col = (prior.*column)(c);
    for (std::size_t k = 0; k < len; ++k) out[k] += probs[c] * col[k];
  }
  return out;
}

ad::Matrix blend(const ad::Matrix& logits, const RescoreTerms& terms) {
  ad::Matrix z(logits.rows, logits.cols);
  for (std::size_t i = 0; i < logits.rows; ++i) {
    const double a = terms.alpha[i];
    for (std::size_t k = 0; k < logits.cols; ++k) z(i, k) = a * logits(i, k) + (1.0 - a) * terms.prior(i, k);
  }
  return softmax_rows(z);
}

std::vector<std::size_t> argmax_rows(const ad::Matrix& m) {
  std::vector<std::size_t> out(m.rows);
  for (std::size_t i = 0; i < m.rows; ++i) out[i] = argmax(row(m, i));
  return out;
}

}  // namespace

RescorePrior::RescorePrior(const CooccurrenceStats& stats)
    : classes_(stats.classes.size()), predicates_(stats.predicates.size()) {
  if (stats.node_pair.rows != classes_ || stats.node_pair.cols != classes_ ||
      stats.pred_given_subj.rows != predicates_ || stats.pred_given_subj.cols != classes_ ||
      stats.pred_given_obj.rows != predicates_ || stats.pred_given_obj.cols != classes_)
    throw ValidationError("stats: table shapes do not match the vocabulary");
  node_ = columns_of(conditional(stats, StatKind::node_pair));
  subj_ = columns_of(conditional(stats, StatKind::pred_given_subj));
  obj_ = columns_of(conditional(stats, StatKind::pred_given_obj));
}

std::span<const double> RescorePrior::node_column(std::size_t c) const {
  return std::span<const double>(node_).subspan(c * classes_, classes_);
}
std::span<const double> RescorePrior::subj_column(std::size_t c) const {
  return std::span<const double>(subj_).subspan(c * predicates_, predicates_);
}
std::span<const double> RescorePrior::obj_column(std::size_t c) const {
  return std::span<const double>(obj_).subspan(c * predicates_, predicates_);
}

RescoreTerms node_rescore_terms(const ad::Matrix& base, const std::vector<std::vector<std::size_t>>& neighbors,
                                const RescorePrior& prior, const RescoreOptions& opt) {
  check_alpha(opt);
  if (base.cols != prior.classes()) throw ValidationError("rescore_nodes: class count differs from the statistics");
  if (neighbors.size() != base.rows) throw ShapeError("rescore_nodes: neighbor list size differs from node count");
  const std::size_t m = base.rows, c = base.cols;
  RescoreTerms t;
  t.alpha.resize(m);
  t.prior = ad::Matrix(m, c);
  for (std::size_t i = 0; i < m; ++i) t.alpha[i] = confidence_of(row(base, i), opt);
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t j : neighbors[i]) {
      if (j >= m) throw ShapeError("rescore_nodes: neighbor index out of range");
      const auto ev = evidence(row(base, j), c, &RescorePrior::node_column, prior, opt.neighbor_evidence);
      for (std::size_t k = 0; k < c; ++k) t.prior(i, k) += t.alpha[j] * ev[k];
    }
  return t;
}

RescoreTerms edge_rescore_terms(const ad::Matrix& base, std::span<const std::pair<std::size_t, std::size_t>> edges,
                                const ad::Matrix& node_probs, const RescorePrior& prior, const RescoreOptions& opt) {
  check_alpha(opt);
  if (base.cols != prior.predicates()) throw ValidationError("rescore_edges: predicate count differs from the statistics");
  if (node_probs.cols != prior.classes()) throw ValidationError("rescore_edges: class count differs from the statistics");
  if (edges.size() != base.rows) throw ShapeError("rescore_edges: edge list size differs from logit rows");
  const std::size_t p = base.cols;
  RescoreTerms t;
  t.alpha.resize(base.rows);
  t.prior = ad::Matrix(base.rows, p);
  for (std::size_t k = 0; k < base.rows; ++k) {
    const auto [i, j] = edges[k];
    if (i >= node_probs.rows || j >= node_probs.rows) throw ShapeError("rescore_edges: endpoint out of range");
    t.alpha[k] = confidence_of(row(base, k), opt);
    const double ai = confidence_of(row(node_probs, i), opt);
    const double aj = confidence_of(row(node_probs, j), opt);
    const auto gs = evidence(row(node_probs, i), p, &RescorePrior::subj_column, prior, opt.neighbor_evidence);
    const auto go = evidence(row(node_probs, j), p, &RescorePrior::obj_column, prior, opt.neighbor_evidence);
    for (std::size_t r = 0; r < p; ++r)
      t.prior(k, r) = opt.combine == EdgeCombine::product ? (ai * gs[r]) * (aj * go[r]) : ai * gs[r] + aj * go[r];
  }
  return t;
}

NodeRescore rescore_nodes(const ad::Matrix& logits, const std::vector<std::vector<std::size_t>>& neighbors,
                          const RescorePrior& prior, const RescoreOptions& opt) {
  NodeRescore out;
  out.base = softmax_rows(logits);
  const auto terms = node_rescore_terms(out.base, neighbors, prior, opt);
  out.refined = blend(logits, terms);
  out.confidence = terms.alpha;
  out.base_class = argmax_rows(out.base);
  out.refined_class = argmax_rows(out.refined);
  return out;
}

EdgeRescore rescore_edges(const ad::Matrix& logits, std::span<const std::pair<std::size_t, std::size_t>> edges,
                          const NodeRescore& nodes, const RescorePrior& prior, const RescoreOptions& opt) {
  EdgeRescore out;
  out.base = softmax_rows(logits);
  const auto terms = edge_rescore_terms(out.base, edges, nodes.refined, prior, opt);
  out.refined = blend(logits, terms);
  out.confidence = terms.alpha;
  out.base_class = argmax_rows(out.base);
  out.refined_class = argmax_rows(out.refined);
  return out;
}

void check_vocabulary(const CooccurrenceStats& stats, const std::vector<std::string>& classes,
                      const std::vector<std::string>& predicates) {
  if (stats.classes != classes) throw ValidationError("statistics class vocabulary differs from the corpus");
  if (stats.predicates != predicates) throw ValidationError("statistics predicate vocabulary differs from the corpus");
}

// ---- persistence ----------------------------------------------------------

namespace {

json table_json(const CountTable& t) {
  json rows = json::array();
  for (std::size_t i = 0; i < t.rows; ++i) {
    json r = json::array();
    for (std::size_t j = 0; j < t.cols; ++j) r.push_back(t(i, j));
    rows.push_back(std::move(r));
  }
  return rows;
}

CountTable table_from(const json& j, std::size_t rows, std::size_t cols, const std::string& name) {
  auto v = j.get<std::vector<std::vector<std::int64_t>>>();
  if (v.size() != rows) throw FormatError("stats: " + name + " has " + std::to_string(v.size()) + " rows, expected " + std::to_string(rows));
  CountTable t(rows, cols);
  for (std::size_t i = 0; i < rows; ++i) {
    if (v[i].size() != cols) throw FormatError("stats: " + name + " row " + std::to_string(i) + " has the wrong length");
    for (std::size_t k = 0; k < cols; ++k) {
      if (v[i][k] < 0) throw FormatError("stats: negative count in " + name);
      t(i, k) = v[i][k];
    }
  }
  return t;
}

}  // namespace

void save_stats(const CooccurrenceStats& st, const std::filesystem::path& path) {
  if (path.empty()) throw IoError("save_stats: empty path");
  json doc;
  doc["classes"] = st.classes;
  doc["predicates"] = st.predicates;
  doc["epsilon"] = st.epsilon;
  doc["node_pair"] = table_json(st.node_pair);
  doc["pred_given_subj"] = table_json(st.pred_given_subj);
  doc["pred_given_obj"] = table_json(st.pred_given_obj);
  doc["triplets"] = json::array();
  for (const auto& t : st.triplets) doc["triplets"].push_back({t.subject, t.predicate, t.object, t.count});
  detail::write_text(path, doc.dump(1) + "\n");
}

CooccurrenceStats load_stats(const std::filesystem::path& path) {
  if (path.empty()) throw IoError("load_stats: empty path");
  CooccurrenceStats st;
  try {
    const json doc = json::parse(detail::read_text(path));
    st.classes = doc.at("classes").get<std::vector<std::string>>();
    st.predicates = doc.at("predicates").get<std::vector<std::string>>();
    st.epsilon = doc.at("epsilon").get<double>();
    const std::size_t c = st.classes.size(), p = st.predicates.size();
    st.node_pair = table_from(doc.at("node_pair"), c, c, "node_pair");
    st.pred_given_subj = table_from(doc.at("pred_given_subj"), p, c, "pred_given_subj");
    st.pred_given_obj = table_from(doc.at("pred_given_obj"), p, c, "pred_given_obj");
    if (auto it = doc.find("triplets"); it != doc.end())
      for (const auto& t : *it) {
        TripletCount tc{t.at(0).get<std::size_t>(), t.at(1).get<std::size_t>(), t.at(2).get<std::size_t>(),
                        t.at(3).get<std::int64_t>()};
        if (tc.subject >= c || tc.object >= c || tc.predicate >= p || tc.count < 0)
          throw FormatError("stats: triplet entry out of range");
        st.triplets.push_back(tc);
      }
  } catch (const json::exception& e) {
    throw FormatError(path.string() + ": " + e.what());
  }
  if (!(st.epsilon >= 0.0)) throw FormatError(path.string() + ": epsilon must be non-negative");
  return st;
}

CooccurrenceStats ablate_stats(const CooccurrenceStats& stats, double fraction) {
  if (!(fraction >= 0.0 && fraction < 1.0)) throw ConfigError("ablate_stats: fraction must lie in [0, 1)");
  CooccurrenceStats out = stats;
  std::vector<std::size_t> order;
  for (std::size_t i = 0; i < stats.triplets.size(); ++i)
    if (stats.triplets[i].count > 0) order.push_back(i);
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return stats.triplets[a].count > stats.triplets[b].count; });
  const auto drop = static_cast<std::size_t>(std::floor(fraction * static_cast<double>(order.size())));
  for (std::size_t k = 0; k < drop; ++k) {
    auto& t = out.triplets[order[k]];
    auto take = [&](std::int64_t& cell) { cell = std::max<std::int64_t>(0, cell - t.count); };
    take(out.node_pair(t.subject, t.object));
    take(out.pred_given_subj(t.predicate, t.subject));
    take(out.pred_given_obj(t.predicate, t.object));
    t.count = 0;
  }
  std::erase_if(out.triplets, [](const TripletCount& t) { return t.count == 0; });
  return out;
}

}  // namespace ssg
