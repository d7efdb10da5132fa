#include "ssg/rsn_gnn.hpp"

#include <algorithm>
#include <cmath>
#include <map>

#include "ssg/error.hpp"

namespace ssg {

GraphTopology make_topology(std::size_t nodes, std::span<const std::pair<std::size_t, std::size_t>> edges) {
  GraphTopology t;
  t.nodes = nodes;
  // (node, neighbor) -> edge; an outgoing edge wins over the reverse one.
  std::map<std::pair<std::size_t, std::size_t>, std::size_t> slots;
  for (std::size_t k = 0; k < edges.size(); ++k) {
    const auto [s, d] = edges[k];
    if (s >= nodes || d >= nodes) throw ShapeError("make_topology: edge endpoint out of range");
    if (s == d) throw ShapeError("make_topology: self loop");
    t.src.push_back(s);
    t.dst.push_back(d);
    slots[{s, d}] = k;
  }
  for (std::size_t k = 0; k < edges.size(); ++k) {
    const auto [s, d] = edges[k];
    slots.try_emplace({d, s}, k);
  }
  for (const auto& [key, edge] : slots) {
    t.slot_node.push_back(key.first);
    t.slot_neighbor.push_back(key.second);
    t.slot_edge.push_back(edge);
  }
  return t;
}

std::vector<std::vector<std::size_t>> GraphTopology::neighbors() const {
  std::vector<std::vector<std::size_t>> out(nodes);
  for (std::size_t k = 0; k < slot_node.size(); ++k) out[slot_node[k]].push_back(slot_neighbor[k]);
  return out;
}

std::array<double, kEdgeDescriptorSize> edge_descriptor(const Box3D& src, const Box3D& dst) {
  std::array<double, kEdgeDescriptorSize> d{};
  double norm2 = 0.0;
  for (int k = 0; k < 3; ++k) {
    d[k] = dst.centroid[k] - src.centroid[k];
    d[3 + k] = dst.dims[k] - src.dims[k];
    norm2 += d[k] * d[k];
  }
  const double vs = src.dims[0] * src.dims[1] * src.dims[2];
  const double vd = dst.dims[0] * dst.dims[1] * dst.dims[2];
  const double ls = std::max({src.dims[0], src.dims[1], src.dims[2]});
  const double ld = std::max({dst.dims[0], dst.dims[1], dst.dims[2]});
  d[6] = std::log(vd / vs);
  d[7] = std::log(ld / ls);
  const double norm = std::sqrt(norm2);
  for (int k = 0; k < 3; ++k) d[8 + k] = norm > 0.0 ? d[k] / norm : 0.0;
  return d;
}

ad::Matrix edge_descriptors(const SceneRecord& scene) {
  const auto idx = scene.edge_index();
  ad::Matrix m(idx.size(), kEdgeDescriptorSize);
  for (std::size_t k = 0; k < idx.size(); ++k) {
    const auto d = edge_descriptor(scene.nodes[idx[k].first].bbox, scene.nodes[idx[k].second].bbox);
    std::copy(d.begin(), d.end(), m.data.begin() + static_cast<std::ptrdiff_t>(k * kEdgeDescriptorSize));
  }
  return m;
}

ad::Value gate(const ad::Value& v, const ad::Value& evidence, const ad::Value& w) {
  if (v.rows() != evidence.rows() || v.cols() != evidence.cols())
    throw ShapeError("gate: feature and evidence shapes differ");
  if (w.rows() != 2 * v.cols() || w.cols() != 1) throw ShapeError("gate: weight must be [2h x 1]");
  const ad::Value score = ad::sigmoid(ad::matmul(ad::concat({v, evidence}, 1), w));  // [M x 1]
  return ad::add(v, ad::mul(score, ad::sigmoid(evidence)));
}

ad::Value neighbor_residual(const ad::Value& v, const GraphTopology& topo) {
  if (v.rows() != topo.nodes) throw ShapeError("neighbor_residual: row count does not match the graph");
  const ad::Value gathered = ad::gather_rows(v, topo.slot_neighbor);
  return ad::add(v, ad::segment_max(gathered, topo.slot_node, topo.nodes));
}

ad::Value edge_message(const ad::Value& v_src, const ad::Value& e, const ad::Value& v_dst, const Mlp<ad::Value>& g_e) {
  return apply(g_e, ad::concat({v_src, e, v_dst}, 1));
}

GraphState forward(const ad::Value& v, const ad::Value& v_geo, const ad::Value& v_spat, const ad::Value& e,
                   const GraphTopology& topo, std::span<const LayerParams<ad::Value>> layers,
                   const GnnOptions& options) {
  if (v.rows() != topo.nodes) throw ShapeError("forward: node feature rows do not match the graph");
  if (e.rows() != topo.edge_count()) throw ShapeError("forward: edge feature rows do not match the graph");
  GraphState s{v, e};
  for (const auto& layer : layers) {
    ad::Value gated = s.nodes;
    if (options.geometric_gate) gated = geometric_gate(gated, v_geo, layer.gates.w_geo);
    if (options.spatial_gate) gated = spatial_gate(gated, v_spat, layer.gates.w_spat);
    const ad::Value pooled = options.neighbor_residual ? neighbor_residual(gated, topo) : gated;

    const ad::Value msg = edge_message(ad::gather_rows(pooled, topo.src), s.edges, ad::gather_rows(pooled, topo.dst),
                                       layer.edge_mlp);
    const ad::Value triplets = ad::concat(
        {ad::gather_rows(gated, topo.slot_node), ad::gather_rows(s.edges, topo.slot_edge),
         ad::gather_rows(gated, topo.slot_neighbor)},
        1);
    const ad::Value node_msg = ad::segment_mean(apply(layer.node_mlp, triplets), topo.slot_node, topo.nodes);

    s.edges = ad::add(s.edges, msg);
    s.nodes = ad::add(gated, node_msg);
  }
  return s;
}

}  // namespace ssg
