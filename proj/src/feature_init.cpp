#include "ssg/feature_init.hpp"

#include <algorithm>
#include <cmath>
#include <iostream>

#include "ssg/error.hpp"

namespace ssg {

SpatialAttributes spatial_attributes(const Box3D& box) {
  for (double d : box.dims)
    if (!(d > 0.0) || !std::isfinite(d)) throw ValidationError("spatial_attributes: box dims must be positive");
  SpatialAttributes a;
  a.dims = box.dims;
  a.volume = box.dims[0] * box.dims[1] * box.dims[2];
  a.length = std::max({box.dims[0], box.dims[1], box.dims[2]});
  a.ratio = std::clamp(box.dims[0] / box.dims[1], kMinAxisRatio, kMaxAxisRatio);
  return a;
}

std::vector<double> aggregate_multiview(const NodeInstance& node, std::size_t feature_dim, MissingViews mode) {
  std::vector<double> out(feature_dim, 0.0);
  if (node.view_features.empty()) {
    if (mode == MissingViews::strict)
      throw ValidationError("node " + node.node_id + " is not visible in any view");
    std::clog << "warning: node " << node.node_id << " has no view features; using a zero feature\n";
    return out;
  }
  for (const auto& vf : node.view_features) {
    if (vf.feature.size() != feature_dim)
      throw ValidationError("node " + node.node_id + ": feature dimension mismatch for view " + vf.view_id);
    for (std::size_t k = 0; k < feature_dim; ++k) out[k] += vf.feature[k];
  }
  const double n = static_cast<double>(node.view_features.size());
  for (double& x : out) x /= n;
  return out;
}

ad::Matrix canonical_points(const PointSet& points, std::size_t max_points) {
  if (points.empty()) throw ValidationError("encode_points: empty point set");
  PointSet pts = points;
  std::sort(pts.begin(), pts.end());
  pts.erase(std::unique(pts.begin(), pts.end()), pts.end());
  if (max_points > 0 && pts.size() > max_points) {
    PointSet picked;
    picked.reserve(max_points);
    for (std::size_t i = 0; i < max_points; ++i) picked.push_back(pts[i * pts.size() / max_points]);
    pts = std::move(picked);
  }
  double c[3] = {0.0, 0.0, 0.0};
  for (const auto& p : pts)
    for (int k = 0; k < 3; ++k) c[k] += p[k];
  for (double& x : c) x /= static_cast<double>(pts.size());
  ad::Matrix m(pts.size(), 3);
  for (std::size_t i = 0; i < pts.size(); ++i)
    for (std::size_t k = 0; k < 3; ++k) m(i, k) = pts[i][k] - c[k];
  return m;
}

ad::Value encode_point_sets(const ad::Value& points, std::span<const std::size_t> segment, std::size_t sets,
                            const GeometricEncoder<ad::Value>& enc) {
  ad::Value h = points;
  for (const auto& layer : enc.point_mlp.layers) h = ad::relu(apply(layer, h));
  return apply(enc.projection, ad::segment_max(h, segment, sets));
}

ad::Value encode_points(ad::Tape& tape, const PointSet& points, const GeometricEncoder<ad::Value>& enc,
                        std::size_t max_points) {
  const ad::Matrix m = canonical_points(points, max_points);
  const std::vector<std::size_t> seg(m.rows, 0);
  return encode_point_sets(tape.constant(m), seg, 1, enc);
}

ad::Value encode_spatial_rows(const ad::Value& attributes, const Linear<ad::Value>& g_s) {
  if (attributes.cols() != kSpatialAttributeCount) throw ShapeError("encode_spatial: expected 6 attributes per row");
  return apply(g_s, attributes);
}

ad::Value encode_spatial(ad::Tape& tape, const Box3D& box, const Linear<ad::Value>& g_s) {
  const auto a = spatial_attributes(box).as_array();
  return encode_spatial_rows(tape.constant(1, kSpatialAttributeCount, {a.begin(), a.end()}), g_s);
}

PreparedFeatures prepare_features(const SceneRecord& scene, std::size_t max_points, MissingViews mode) {
  const std::size_t m = scene.nodes.size();
  PreparedFeatures f;
  f.multiview = ad::Matrix(m, scene.feature_dim);
  f.attributes = ad::Matrix(m, kSpatialAttributeCount);
  std::vector<double> stacked;
  for (std::size_t i = 0; i < m; ++i) {
    const auto& node = scene.nodes[i];
    const auto v0 = aggregate_multiview(node, scene.feature_dim, mode);
    std::copy(v0.begin(), v0.end(), f.multiview.data.begin() + static_cast<std::ptrdiff_t>(i * scene.feature_dim));
    const auto a = spatial_attributes(node.bbox).as_array();
    std::copy(a.begin(), a.end(), f.attributes.data.begin() + static_cast<std::ptrdiff_t>(i * kSpatialAttributeCount));
    if (node.points.empty()) throw ValidationError("node " + node.node_id + " has no points");
    const ad::Matrix pts = canonical_points(node.points, max_points);
    stacked.insert(stacked.end(), pts.data.begin(), pts.data.end());
    f.point_segment.insert(f.point_segment.end(), pts.rows, i);
  }
  f.points = ad::Matrix(f.point_segment.size(), 3, std::move(stacked));
  return f;
}

InitialNodeFeatures init_scene_features(ad::Tape& tape, const PreparedFeatures& prepared, const BoundParams& params) {
  const std::size_t m = prepared.multiview.rows;
  InitialNodeFeatures out;
  out.v0 = tape.constant(prepared.multiview);
  out.v_geo = encode_point_sets(tape.constant(prepared.points), prepared.point_segment, m, params.geometric);
  out.v_spat = encode_spatial_rows(tape.constant(prepared.attributes), params.spatial);
  return out;
}

}  // namespace ssg
