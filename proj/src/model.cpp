#include "ssg/model.hpp"

#include <cmath>

#include "ssg/feature_init.hpp"
#include "ssg/random.hpp"
#include "ssg/rsn_gnn.hpp"

namespace ssg {

void validate(const ModelConfig& cfg) {
  if (cfg.feature_dim == 0) throw ConfigError("model: feature_dim must be positive");
  if (cfg.classes == 0) throw ConfigError("model: classes must be positive");
  if (cfg.predicates == 0) throw ConfigError("model: predicates must be positive");
  if (cfg.hidden == 0) throw ConfigError("model: hidden must be positive");
  if (cfg.layers == 0) throw ConfigError("model: layers must be positive");
  if (cfg.point_widths.empty()) throw ConfigError("model: point_widths must not be empty");
  for (auto w : cfg.point_widths)
    if (w == 0) throw ConfigError("model: point widths must be positive");
}

namespace {

Linear<ad::Matrix> linear_shape(std::size_t in, std::size_t out) { return {ad::Matrix(in, out), ad::Matrix(1, out)}; }

Mlp<ad::Matrix> mlp_shape(std::initializer_list<std::size_t> widths) {
  Mlp<ad::Matrix> m;
  auto it = widths.begin();
  for (std::size_t prev = *it++; it != widths.end(); prev = *it++) m.layers.push_back(linear_shape(prev, *it));
  return m;
}

}  // namespace

ModelParams zero_params(const ModelConfig& cfg) {
  validate(cfg);
  const std::size_t h = cfg.hidden;
  ModelParams p;
  p.input_proj = linear_shape(cfg.feature_dim, h);
  std::size_t prev = 3;
  for (auto w : cfg.point_widths) {
    p.geometric.point_mlp.layers.push_back(linear_shape(prev, w));
    prev = w;
  }
  p.geometric.projection = linear_shape(prev, h);
  p.spatial = linear_shape(kSpatialAttributeCount, h);
  p.edge_embed = linear_shape(kEdgeDescriptorSize, h);
  for (std::size_t l = 0; l < cfg.layers; ++l) {
    LayerParams<ad::Matrix> layer;
    layer.gates.w_geo = ad::Matrix(2 * h, 1);
    layer.gates.w_spat = ad::Matrix(2 * h, 1);
    layer.edge_mlp = mlp_shape({3 * h, h, h});
    layer.node_mlp = mlp_shape({3 * h, h, h});
    p.layers.push_back(std::move(layer));
  }
  p.predictors.node_head = mlp_shape({h, h, cfg.classes});
  p.predictors.edge_head = mlp_shape({h, h, cfg.predicates});
  return p;
}

ModelParams init_params(const ModelConfig& cfg, std::uint64_t seed) {
  ModelParams p = zero_params(cfg);
  Rng rng(seed);
  visit_params(p, [&](const std::string& name, ad::Matrix& m) {
    if (name.ends_with(".bias")) return;
    const double limit = std::sqrt(6.0 / static_cast<double>(m.rows + m.cols));
    for (double& x : m.data) x = rng.uniform(-limit, limit);
  });
  return p;
}

BoundParams bind(const ModelParams& params, ad::Tape& tape, bool trainable) {
  BoundParams b;
  // Mirror the container sizes, then assign leaves in visit order.
  b.geometric.point_mlp.layers.resize(params.geometric.point_mlp.layers.size());
  b.layers.resize(params.layers.size());
  for (std::size_t l = 0; l < params.layers.size(); ++l) {
    b.layers[l].edge_mlp.layers.resize(params.layers[l].edge_mlp.layers.size());
    b.layers[l].node_mlp.layers.resize(params.layers[l].node_mlp.layers.size());
  }
  b.predictors.node_head.layers.resize(params.predictors.node_head.layers.size());
  b.predictors.edge_head.layers.resize(params.predictors.edge_head.layers.size());

  std::vector<const ad::Matrix*> src;
  visit_params(params, [&](const std::string&, const ad::Matrix& m) { src.push_back(&m); });
  std::size_t k = 0;
  visit_params(b, [&](const std::string&, ad::Value& v) {
    const ad::Matrix& m = *src[k++];
    v = trainable ? tape.parameter(m) : tape.constant(m);
  });
  return b;
}

std::size_t scalar_count(const ModelParams& params) {
  std::size_t n = 0;
  visit_params(params, [&](const std::string&, const ad::Matrix& m) { n += m.size(); });
  return n;
}

std::vector<double> flat_grad(const BoundParams& bound) {
  std::vector<double> out;
  visit_params(bound, [&](const std::string&, const ad::Value& v) {
    auto g = v.grad();
    if (g.empty())
      out.insert(out.end(), v.size(), 0.0);
    else
      out.insert(out.end(), g.begin(), g.end());
  });
  return out;
}

ad::Value apply(const Linear<ad::Value>& l, const ad::Value& x) { return ad::add(ad::matmul(x, l.weight), l.bias); }

ad::Value apply(const Mlp<ad::Value>& m, const ad::Value& x) {
  ad::Value y = x;
  for (std::size_t i = 0; i < m.layers.size(); ++i) {
    y = apply(m.layers[i], y);
    if (i + 1 < m.layers.size()) y = ad::relu(y);
  }
  return y;
}

}  // namespace ssg
