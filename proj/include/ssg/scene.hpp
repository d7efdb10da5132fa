#pragma once

// In-memory scene representation and its on-disk format.
//
// A scene is a JSON document plus a sibling binary blob holding the bulk
// numerics (point coordinates and per-view feature vectors) as little-endian
// 32-bit reals. A corpus is a directory with a manifest naming its scene
// files and the shared class/predicate vocabularies.

#include <array>
#include <cstddef>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

namespace ssg {

using Vec3 = std::array<double, 3>;
using Point = std::array<float, 3>;
using PointSet = std::vector<Point>;

struct Box3D {
  Vec3 centroid{};
  Vec3 dims{};  // positive extents along x, y, z
  bool operator==(const Box3D&) const = default;
};

struct View {
  std::string view_id;
  bool operator==(const View&) const = default;
};

struct ViewFeature {
  std::string view_id;
  std::vector<float> feature;
  bool operator==(const ViewFeature&) const = default;
};

struct NodeInstance {
  std::string node_id;
  PointSet points;
  Box3D bbox;
  std::vector<ViewFeature> view_features;  // one per covisible view
  std::optional<int> gt_class;
  bool operator==(const NodeInstance&) const = default;
};

struct EdgeInstance {
  std::string src;
  std::string dst;
  std::optional<int> gt_predicate;
  bool operator==(const EdgeInstance&) const = default;
};

struct SceneRecord {
  std::string scene_id;
  std::size_t feature_dim = 0;
  std::vector<std::string> classes;
  std::vector<std::string> predicates;  // index 0 is "none"
  std::vector<View> views;
  std::vector<NodeInstance> nodes;
  std::vector<EdgeInstance> edges;

  std::size_t class_count() const { return classes.size(); }
  std::size_t predicate_count() const { return predicates.size(); }
  std::optional<std::size_t> node_index(const std::string& node_id) const;
  // Edge endpoints as node indices, in edge order. Requires a valid scene.
  std::vector<std::pair<std::size_t, std::size_t>> edge_index() const;

  bool operator==(const SceneRecord&) const = default;
};

inline constexpr const char* kNonePredicate = "none";
inline constexpr double kDefaultEdgeRadius = 2.0;
inline constexpr double kMatchTolerance = 0.05;

// Throws ValidationError naming the offending node, edge or view.
void validate(const SceneRecord& scene);

SceneRecord load_scene(const std::filesystem::path& path);
// Writes `path` and a sibling blob with the same stem and a .bin extension.
void save_scene(const SceneRecord& scene, const std::filesystem::path& path);

// Adds every ordered pair (i, j), i != j, whose centroids lie within
// `radius` meters. Existing edges (and their labels) are kept as they are.
SceneRecord build_proximity_edges(SceneRecord scene, double radius = kDefaultEdgeRadius);

// Greedy assignment of predicted segments to ground-truth segments by shared
// point count. A predicted point is shared with the ground-truth segment that
// owns its nearest ground-truth point, if that point lies within `tolerance`.
// Returns, per prediction, the matched ground-truth index or nullopt.
std::vector<std::optional<std::size_t>> match_instances(std::span<const PointSet> predicted,
                                                        std::span<const PointSet> gt,
                                                        double tolerance = kMatchTolerance);
// Shared point counts [predicted][gt] as used by match_instances.
std::vector<std::vector<std::size_t>> overlap_counts(std::span<const PointSet> predicted,
                                                     std::span<const PointSet> gt,
                                                     double tolerance = kMatchTolerance);

struct Corpus {
  std::vector<std::string> classes;
  std::vector<std::string> predicates;
  std::size_t feature_dim = 0;
  std::vector<SceneRecord> scenes;
  bool operator==(const Corpus&) const = default;
};

// Checks that every scene shares the corpus vocabularies and feature width.
void validate(const Corpus& corpus);
Corpus load_corpus(const std::filesystem::path& dir);
// Writes manifest.json and one scene file (plus blob) per scene.
void save_corpus(const Corpus& corpus, const std::filesystem::path& dir);

}  // namespace ssg
