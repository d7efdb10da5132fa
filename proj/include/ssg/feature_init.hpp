#pragma once

// Initial node features: the multi-view image feature (mean over covisible
// views), a PointNet-style geometric feature, and a linear spatial feature
// computed from box attributes.

#include <array>
#include <cstddef>
#include <span>
#include <vector>

#include "ssg/autodiff.hpp"
#include "ssg/model.hpp"
#include "ssg/scene.hpp"

namespace ssg {

// Box attributes [b_x, b_y, b_z, volume, length, ratio].
struct SpatialAttributes {
  Vec3 dims{};
  double volume = 0.0;
  double length = 0.0;  // largest extent
  double ratio = 0.0;   // b_x / b_y, clamped to [1e-3, 1e3]

  std::array<double, 6> as_array() const { return {dims[0], dims[1], dims[2], volume, length, ratio}; }
};

inline constexpr double kMinAxisRatio = 1e-3;
inline constexpr double kMaxAxisRatio = 1e3;
inline constexpr std::size_t kSpatialAttributeCount = 6;

SpatialAttributes spatial_attributes(const Box3D& box);

enum class MissingViews {
  strict,     // a node without views is an error
  zero_fill,  // zero vector plus a warning on stderr
};

// Element-wise mean of the node's view features, widened to 64-bit.
std::vector<double> aggregate_multiview(const NodeInstance& node, std::size_t feature_dim,
                                        MissingViews mode = MissingViews::strict);

// Encoder input for one point set: distinct points in lexicographic order,
// optionally stride-subsampled to `max_points`, then shifted by their mean.
// The canonical order makes the encoding exactly invariant to permutation
// and duplication of the input points.
ad::Matrix canonical_points(const PointSet& points, std::size_t max_points = 0);

// Per-point MLP (ReLU after every layer), max-pool, then linear projection.
// `points` holds the stacked canonical points of all sets, `segment` their
// owning set.
ad::Value encode_point_sets(const ad::Value& points, std::span<const std::size_t> segment, std::size_t sets,
                            const GeometricEncoder<ad::Value>& enc);
ad::Value encode_points(ad::Tape& tape, const PointSet& points, const GeometricEncoder<ad::Value>& enc,
                        std::size_t max_points = 0);

// Linear map of stacked attribute rows [M x 6].
ad::Value encode_spatial_rows(const ad::Value& attributes, const Linear<ad::Value>& g_s);
ad::Value encode_spatial(ad::Tape& tape, const Box3D& box, const Linear<ad::Value>& g_s);

// Parameter-independent inputs of a scene, computed once and reused across
// training epochs.
struct PreparedFeatures {
  ad::Matrix multiview;   // [M x D]
  ad::Matrix points;      // [N x 3], canonical points of every node, stacked
  std::vector<std::size_t> point_segment;
  ad::Matrix attributes;  // [M x 6]
};

PreparedFeatures prepare_features(const SceneRecord& scene, std::size_t max_points = 0,
                                  MissingViews mode = MissingViews::strict);

struct InitialNodeFeatures {
  ad::Value v0;      // [M x D]
  ad::Value v_geo;   // [M x h]
  ad::Value v_spat;  // [M x h]
};

InitialNodeFeatures init_scene_features(ad::Tape& tape, const PreparedFeatures& prepared, const BoundParams& params);

}  // namespace ssg
