#pragma once

// Learnable parameters of the scene-graph network.
//
// Parameter groups are templated on their leaf type: ModelParams holds plain
// matrices (storage, optimizer, checkpoint), BoundParams holds tape values
// for one forward/backward pass. `visit_params` walks the leaves in the
// canonical order used by checkpoints and the optimizer.

#include <cstddef>
#include <cstdint>
#include <string>
#include <vector>

#include "ssg/autodiff.hpp"

namespace ssg {

struct ModelConfig {
  std::size_t feature_dim = 0;  // D, width of the per-view features
  std::size_t classes = 0;      // C
  std::size_t predicates = 0;   // P, including "none" at index 0
  std::size_t hidden = 256;     // h
  std::size_t layers = 2;       // L
  std::vector<std::size_t> point_widths{64, 128, 256};
  // Upper bound on points fed to the point encoder per node; 0 keeps all.
  std::size_t max_points = 0;
  bool geometric_gate = true;
  bool spatial_gate = true;
  bool neighbor_residual = true;

  bool operator==(const ModelConfig&) const = default;
};

void validate(const ModelConfig& cfg);

// y = x W + b with W [in x out], b [1 x out].
template <class T>
struct Linear {
  T weight;
  T bias;
};

// Linear layers with ReLU between them (none after the last).
template <class T>
struct Mlp {
  std::vector<Linear<T>> layers;
};

template <class T>
struct GeometricEncoder {
  Mlp<T> point_mlp;  // shared per-point MLP, ReLU after every layer
  Linear<T> projection;
};

template <class T>
struct GateParams {
  T w_geo;   // [2h x 1]
  T w_spat;  // [2h x 1]
};

template <class T>
struct LayerParams {
  GateParams<T> gates;
  Mlp<T> edge_mlp;  // 3h -> h -> h
  Mlp<T> node_mlp;  // 3h -> h -> h
};

template <class T>
struct PredictorParams {
  Mlp<T> node_head;  // h -> h -> C
  Mlp<T> edge_head;  // h -> h -> P
};

template <class T>
struct ModelParamsT {
  Linear<T> input_proj;  // D -> h
  GeometricEncoder<T> geometric;
  Linear<T> spatial;     // 6 -> h
  Linear<T> edge_embed;  // 11 -> h
  std::vector<LayerParams<T>> layers;
  PredictorParams<T> predictors;
};

using ModelParams = ModelParamsT<ad::Matrix>;
using BoundParams = ModelParamsT<ad::Value>;

namespace detail {
template <class L, class F>
void visit_linear(L& l, const std::string& name, F& f) {
  f(name + ".weight", l.weight);
  f(name + ".bias", l.bias);
}
template <class M, class F>
void visit_mlp(M& m, const std::string& name, F& f) {
  for (std::size_t i = 0; i < m.layers.size(); ++i) visit_linear(m.layers[i], name + "." + std::to_string(i), f);
}
}  // namespace detail

// Calls f(name, leaf) for every parameter leaf; constness follows `p`.
template <class P, class F>
void visit_params(P& p, F&& f) {
  detail::visit_linear(p.input_proj, "input_proj", f);
  detail::visit_mlp(p.geometric.point_mlp, "geometric.point_mlp", f);
  detail::visit_linear(p.geometric.projection, "geometric.projection", f);
  detail::visit_linear(p.spatial, "spatial", f);
  detail::visit_linear(p.edge_embed, "edge_embed", f);
  for (std::size_t l = 0; l < p.layers.size(); ++l) {
    const std::string n = "layers." + std::to_string(l);
    f(n + ".w_geo", p.layers[l].gates.w_geo);
    f(n + ".w_spat", p.layers[l].gates.w_spat);
    detail::visit_mlp(p.layers[l].edge_mlp, n + ".edge_mlp", f);
    detail::visit_mlp(p.layers[l].node_mlp, n + ".node_mlp", f);
  }
  detail::visit_mlp(p.predictors.node_head, "predictors.node_head", f);
  detail::visit_mlp(p.predictors.edge_head, "predictors.edge_head", f);
}

// Glorot-uniform weights, zero biases, drawn from `seed`.
ModelParams init_params(const ModelConfig& cfg, std::uint64_t seed);
// All-zero parameters with the shapes implied by `cfg`.
ModelParams zero_params(const ModelConfig& cfg);

// Registers every parameter on `tape`; `trainable` selects parameter
// (gradient-tracking) versus constant leaves.
BoundParams bind(const ModelParams& params, ad::Tape& tape, bool trainable = true);

std::size_t scalar_count(const ModelParams& params);
// Flattened gradients of `bound` in visit order (zeros where no gradient).
std::vector<double> flat_grad(const BoundParams& bound);

ad::Value apply(const Linear<ad::Value>& l, const ad::Value& x);
ad::Value apply(const Mlp<ad::Value>& m, const ad::Value& x);

}  // namespace ssg
