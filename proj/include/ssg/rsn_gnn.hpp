#pragma once

// Residual spatial-neighbor message passing.
//
// Per layer: geometric gate, spatial gate, max-pooled neighbor residual (edge
// messages only), residual edge update, and a residual node update from
// mean-aggregated triplet messages.

#include <array>
#include <cstddef>
#include <span>
#include <utility>
#include <vector>

#include "ssg/autodiff.hpp"
#include "ssg/model.hpp"
#include "ssg/scene.hpp"

namespace ssg {

inline constexpr std::size_t kEdgeDescriptorSize = 11;

// Directed edges plus the undirected neighborhood they induce. Each
// neighborhood slot is (node, neighbor, edge), where `edge` is the edge
// node->neighbor if it exists and neighbor->node otherwise.
struct GraphTopology {
  std::size_t nodes = 0;
  std::vector<std::size_t> src;
  std::vector<std::size_t> dst;
  std::vector<std::size_t> slot_node;
  std::vector<std::size_t> slot_neighbor;
  std::vector<std::size_t> slot_edge;

  std::size_t edge_count() const { return src.size(); }
  // Distinct neighbors per node, ascending.
  std::vector<std::vector<std::size_t>> neighbors() const;
};

GraphTopology make_topology(std::size_t nodes, std::span<const std::pair<std::size_t, std::size_t>> edges);

// [dc(3), dd(3), log volume ratio, log length ratio, unit direction(3)],
// all differences taken dst - src.
std::array<double, kEdgeDescriptorSize> edge_descriptor(const Box3D& src, const Box3D& dst);
ad::Matrix edge_descriptors(const SceneRecord& scene);

// v + sigmoid([v, evidence] w) * sigmoid(evidence), one scalar gate per row.
ad::Value gate(const ad::Value& v, const ad::Value& evidence, const ad::Value& w);
inline ad::Value geometric_gate(const ad::Value& v, const ad::Value& v_geo, const ad::Value& w_g) {
  return gate(v, v_geo, w_g);
}
inline ad::Value spatial_gate(const ad::Value& v, const ad::Value& v_spat, const ad::Value& w_s) {
  return gate(v, v_spat, w_s);
}

// v_i + elementwise max over neighbors; isolated nodes are unchanged.
ad::Value neighbor_residual(const ad::Value& v, const GraphTopology& topo);

// g_e([v_src, e, v_dst]) for stacked rows.
ad::Value edge_message(const ad::Value& v_src, const ad::Value& e, const ad::Value& v_dst,
                       const Mlp<ad::Value>& g_e);

struct GnnOptions {
  bool geometric_gate = true;
  bool spatial_gate = true;
  bool neighbor_residual = true;
};

struct GraphState {
  ad::Value nodes;  // [M x h]
  ad::Value edges;  // [E x h]
};

// Runs every layer in `layers`. `v` is the projected initial node feature,
// `e` the embedded edge descriptors.
GraphState forward(const ad::Value& v, const ad::Value& v_geo, const ad::Value& v_spat, const ad::Value& e,
                   const GraphTopology& topo, std::span<const LayerParams<ad::Value>> layers,
                   const GnnOptions& options = {});

}  // namespace ssg
