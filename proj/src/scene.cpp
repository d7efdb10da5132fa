#include "ssg/scene.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>
#include <set>
#include <tuple>
#include <unordered_map>

#include "binary_io.hpp"
#include "json.hpp"
#include "ssg/error.hpp"

namespace ssg {

using nlohmann::json;
namespace fs = std::filesystem;

std::optional<std::size_t> SceneRecord::node_index(const std::string& node_id) const {
  for (std::size_t i = 0; i < nodes.size(); ++i)
    if (nodes[i].node_id == node_id) return i;
  return std::nullopt;
}

std::vector<std::pair<std::size_t, std::size_t>> SceneRecord::edge_index() const {
  std::unordered_map<std::string, std::size_t> ids;
  for (std::size_t i = 0; i < nodes.size(); ++i) ids.emplace(nodes[i].node_id, i);
  std::vector<std::pair<std::size_t, std::size_t>> out;
  out.reserve(edges.size());
  for (const auto& e : edges) {
    auto s = ids.find(e.src);
    auto d = ids.find(e.dst);
    if (s == ids.end() || d == ids.end())
      throw ValidationError("edge " + e.src + "->" + e.dst + " references an unknown node");
    out.emplace_back(s->second, d->second);
  }
  return out;
}

// ---- validation -----------------------------------------------------------

void validate(const SceneRecord& s) {
  const std::string where = "scene '" + s.scene_id + "': ";
  if (s.feature_dim == 0) throw ValidationError(where + "feature_dim must be positive");
  if (s.classes.empty()) throw ValidationError(where + "empty class vocabulary");
  if (s.predicates.empty() || s.predicates[0] != kNonePredicate)
    throw ValidationError(where + "predicate vocabulary must start with \"none\"");

  std::set<std::string> view_ids;
  for (const auto& v : s.views)
    if (!view_ids.insert(v.view_id).second) throw ValidationError(where + "duplicate view_id " + v.view_id);

  std::set<std::string> node_ids;
  for (const auto& n : s.nodes) {
    const std::string nw = where + "node " + n.node_id + ": ";
    if (!node_ids.insert(n.node_id).second) throw ValidationError(where + "duplicate node_id " + n.node_id);
    for (int k = 0; k < 3; ++k) {
      if (!std::isfinite(n.bbox.centroid[k])) throw ValidationError(nw + "non-finite box centroid");
      if (!(n.bbox.dims[k] > 0.0) || !std::isfinite(n.bbox.dims[k]))
        throw ValidationError(nw + "box dims must be positive and finite");
    }
    for (const auto& p : n.points)
      for (float x : p)
        if (!std::isfinite(x)) throw ValidationError(nw + "non-finite point coordinate");
    std::set<std::string> seen;
    for (const auto& vf : n.view_features) {
      if (!view_ids.count(vf.view_id)) throw ValidationError(nw + "unknown view_id " + vf.view_id);
      if (!seen.insert(vf.view_id).second) throw ValidationError(nw + "duplicate feature for view " + vf.view_id);
      if (vf.feature.size() != s.feature_dim)
        throw ValidationError(nw + "feature dimension " + std::to_string(vf.feature.size()) + " != " +
                              std::to_string(s.feature_dim) + " for view " + vf.view_id);
      for (float x : vf.feature)
        if (!std::isfinite(x)) throw ValidationError(nw + "non-finite feature entry for view " + vf.view_id);
    }
    if (n.gt_class && (*n.gt_class < 0 || static_cast<std::size_t>(*n.gt_class) >= s.classes.size()))
      throw ValidationError(nw + "gt_class " + std::to_string(*n.gt_class) + " out of range");
  }

  std::set<std::pair<std::string, std::string>> pairs;
  for (const auto& e : s.edges) {
    const std::string ew = where + "edge " + e.src + "->" + e.dst + ": ";
    if (!node_ids.count(e.src) || !node_ids.count(e.dst)) throw ValidationError(ew + "references an unknown node");
    if (e.src == e.dst) throw ValidationError(ew + "self loop");
    if (!pairs.emplace(e.src, e.dst).second) throw ValidationError(ew + "duplicate directed pair");
    if (e.gt_predicate && (*e.gt_predicate < 0 || static_cast<std::size_t>(*e.gt_predicate) >= s.predicates.size()))
      throw ValidationError(ew + "gt_predicate " + std::to_string(*e.gt_predicate) + " out of range");
  }
}

void validate(const Corpus& c) {
  for (const auto& s : c.scenes) {
    validate(s);
    if (s.classes != c.classes || s.predicates != c.predicates || s.feature_dim != c.feature_dim)
      throw ValidationError("scene '" + s.scene_id + "' disagrees with the corpus vocabulary or feature_dim");
  }
}

// ---- serialization --------------------------------------------------------

namespace {

const json& field(const json& j, const char* key, const std::string& ctx) {
  if (!j.is_object()) throw FormatError(ctx + ": expected an object");
  auto it = j.find(key);
  if (it == j.end()) throw FormatError(ctx + ": missing field \"" + key + "\"");
  return *it;
}

template <class T>
T as(const json& j, const std::string& ctx) {
  try {
    return j.get<T>();
  } catch (const json::exception& e) {
    throw FormatError(ctx + ": " + e.what());
  }
}

Vec3 vec3(const json& j, const std::string& ctx) {
  auto v = as<std::vector<double>>(j, ctx);
  if (v.size() != 3) throw FormatError(ctx + ": expected 3 numbers");
  return {v[0], v[1], v[2]};
}

struct BlobRef {
  std::uint64_t offset = 0;  // bytes
  std::uint64_t len = 0;     // 32-bit values
};

std::vector<float> read_floats(const std::vector<unsigned char>& blob, BlobRef ref, const std::string& ctx) {
  if (ref.offset % 4 != 0) throw FormatError(ctx + ": data_offset not 4-byte aligned");
  if (ref.offset > blob.size() || ref.len > (blob.size() - ref.offset) / 4)
    throw FormatError(ctx + ": blob range out of bounds");
  std::vector<float> out(ref.len);
  for (std::size_t i = 0; i < ref.len; ++i) out[i] = detail::get_f32(blob.data() + ref.offset + 4 * i);
  return out;
}

BlobRef blob_ref(const json& j, const std::string& ctx) {
  return {as<std::uint64_t>(field(j, "data_offset", ctx), ctx + ".data_offset"),
          as<std::uint64_t>(field(j, "len", ctx), ctx + ".len")};
}

fs::path blob_path_for(const fs::path& scene_path) {
  fs::path p = scene_path;
  p.replace_extension(".bin");
  return p;
}

}  // namespace

SceneRecord load_scene(const fs::path& path) {
  const std::string text = detail::read_text(path);
  json doc;
  try {
    doc = json::parse(text);
  } catch (const json::parse_error& e) {
    // nlohmann reports a byte offset; convert to a line number for humans.
    const std::size_t at = std::min<std::size_t>(e.byte, text.size());
    const auto line = 1 + std::count(text.begin(), text.begin() + static_cast<std::ptrdiff_t>(at), '\n');
    throw FormatError(path.string() + ":" + std::to_string(line) + ": " + e.what());
  }
  const std::string ctx = path.string();

  SceneRecord s;
  s.scene_id = as<std::string>(field(doc, "scene_id", ctx), ctx + ".scene_id");
  s.feature_dim = as<std::size_t>(field(doc, "feature_dim", ctx), ctx + ".feature_dim");
  s.classes = as<std::vector<std::string>>(field(doc, "classes", ctx), ctx + ".classes");
  s.predicates = as<std::vector<std::string>>(field(doc, "predicates", ctx), ctx + ".predicates");

  std::vector<unsigned char> blob;
  fs::path blob_file = blob_path_for(path);
  if (auto it = doc.find("blob"); it != doc.end())
    blob_file = path.parent_path() / as<std::string>(*it, ctx + ".blob");
  bool blob_loaded = false;
  auto load_blob = [&](const fs::path& p) -> const std::vector<unsigned char>& {
    if (!blob_loaded) {
      blob = detail::read_bytes(p);
      blob_loaded = true;
    }
    return blob;
  };

  const auto& views = field(doc, "views", ctx);
  for (std::size_t i = 0; i < views.size(); ++i) {
    const std::string vc = ctx + ".views[" + std::to_string(i) + "]";
    s.views.push_back({as<std::string>(field(views[i], "view_id", vc), vc + ".view_id")});
  }

  const auto& nodes = field(doc, "nodes", ctx);
  for (std::size_t i = 0; i < nodes.size(); ++i) {
    const auto& jn = nodes[i];
    const std::string nc = ctx + ".nodes[" + std::to_string(i) + "]";
    NodeInstance n;
    n.node_id = as<std::string>(field(jn, "node_id", nc), nc + ".node_id");
    if (auto it = jn.find("gt_class"); it != jn.end() && !it->is_null()) n.gt_class = as<int>(*it, nc + ".gt_class");
    const auto& bb = field(jn, "bbox", nc);
    n.bbox.centroid = vec3(field(bb, "centroid", nc + ".bbox"), nc + ".bbox.centroid");
    n.bbox.dims = vec3(field(bb, "dims", nc + ".bbox"), nc + ".bbox.dims");
    if (auto it = jn.find("points"); it != jn.end()) {
      fs::path pf = blob_file;
      if (auto pit = jn.find("points_file"); pit != jn.end())
        pf = path.parent_path() / as<std::string>(*pit, nc + ".points_file");
      const auto ref = blob_ref(*it, nc + ".points");
      if (ref.len % 3 != 0) throw FormatError(nc + ".points: length is not a multiple of 3");
      const auto flat = read_floats(load_blob(pf), ref, nc + ".points");
      n.points.resize(flat.size() / 3);
      for (std::size_t k = 0; k < n.points.size(); ++k) n.points[k] = {flat[3 * k], flat[3 * k + 1], flat[3 * k + 2]};
    }
    const auto& feats = field(jn, "features", nc);
    for (std::size_t k = 0; k < feats.size(); ++k) {
      const std::string fc = nc + ".features[" + std::to_string(k) + "]";
      ViewFeature vf;
      vf.view_id = as<std::string>(field(feats[k], "view_id", fc), fc + ".view_id");
      vf.feature = read_floats(load_blob(blob_file), blob_ref(feats[k], fc), fc);
      n.view_features.push_back(std::move(vf));
    }
    s.nodes.push_back(std::move(n));
  }

  const auto& edges = field(doc, "edges", ctx);
  for (std::size_t i = 0; i < edges.size(); ++i) {
    const auto& je = edges[i];
    const std::string ec = ctx + ".edges[" + std::to_string(i) + "]";
    EdgeInstance e;
    e.src = as<std::string>(field(je, "src", ec), ec + ".src");
    e.dst = as<std::string>(field(je, "dst", ec), ec + ".dst");
    if (auto it = je.find("gt_predicate"); it != je.end() && !it->is_null())
      e.gt_predicate = as<int>(*it, ec + ".gt_predicate");
    s.edges.push_back(std::move(e));
  }

  validate(s);
  return s;
}

void save_scene(const SceneRecord& s, const fs::path& path) {
  validate(s);
  const fs::path blob_file = blob_path_for(path);
  const std::string blob_name = blob_file.filename().string();
  std::vector<unsigned char> blob;

  auto put = [&](std::span<const float> values) {
    json ref = {{"data_offset", blob.size()}, {"len", values.size()}};
    for (float x : values) detail::put_f32(blob, x);
    return ref;
  };

  json doc;
  doc["scene_id"] = s.scene_id;
  doc["feature_dim"] = s.feature_dim;
  doc["classes"] = s.classes;
  doc["predicates"] = s.predicates;
  doc["blob"] = blob_name;
  doc["views"] = json::array();
  for (const auto& v : s.views) doc["views"].push_back({{"view_id", v.view_id}});
  doc["nodes"] = json::array();
  for (const auto& n : s.nodes) {
    json jn;
    jn["node_id"] = n.node_id;
    jn["gt_class"] = n.gt_class ? json(*n.gt_class) : json(nullptr);
    jn["bbox"] = {{"centroid", n.bbox.centroid}, {"dims", n.bbox.dims}};
    std::vector<float> flat;
    flat.reserve(n.points.size() * 3);
    for (const auto& p : n.points) flat.insert(flat.end(), p.begin(), p.end());
    jn["points_file"] = blob_name;
    jn["points"] = put(flat);
    jn["features"] = json::array();
    for (const auto& vf : n.view_features) {
      json f = put(vf.feature);
      f["view_id"] = vf.view_id;
      jn["features"].push_back(std::move(f));
    }
    doc["nodes"].push_back(std::move(jn));
  }
  doc["edges"] = json::array();
  for (const auto& e : s.edges)
    doc["edges"].push_back(
        {{"src", e.src}, {"dst", e.dst}, {"gt_predicate", e.gt_predicate ? json(*e.gt_predicate) : json(nullptr)}});

  detail::write_bytes(blob_file, blob.data(), blob.size());
  detail::write_text(path, doc.dump(1) + "\n");
}

// ---- proximity edges ------------------------------------------------------

SceneRecord build_proximity_edges(SceneRecord scene, double radius) {
  if (!(radius > 0.0)) throw ConfigError("build_proximity_edges: radius must be positive");
  std::set<std::pair<std::string, std::string>> present;
  for (const auto& e : scene.edges) present.emplace(e.src, e.dst);
  const double r2 = radius * radius;
  for (std::size_t i = 0; i < scene.nodes.size(); ++i)
    for (std::size_t j = 0; j < scene.nodes.size(); ++j) {
      if (i == j) continue;
      const auto& a = scene.nodes[i].bbox.centroid;
      const auto& b = scene.nodes[j].bbox.centroid;
      double d2 = 0.0;
      for (int k = 0; k < 3; ++k) d2 += (a[k] - b[k]) * (a[k] - b[k]);
      if (d2 > r2) continue;
      if (present.emplace(scene.nodes[i].node_id, scene.nodes[j].node_id).second)
        scene.edges.push_back({scene.nodes[i].node_id, scene.nodes[j].node_id, std::nullopt});
    }
  return scene;
}

// ---- instance matching ----------------------------------------------------

namespace {

// Uniform voxel hash over the ground-truth points, cell size = tolerance.
class PointGrid {
 public:
  PointGrid(std::span<const PointSet> sets, double cell) : cell_(cell) {
    for (std::size_t s = 0; s < sets.size(); ++s)
      for (const auto& p : sets[s]) cells_[key(cell_of(p))].push_back({p, s});
  }

  // Owner of the nearest point within `tol`, if any. Ties keep the lowest set.
  std::optional<std::size_t> nearest_owner(const Point& q, double tol) const {
    const auto c = cell_of(q);
    double best = tol * tol;
    std::optional<std::size_t> owner;
    for (int dx = -1; dx <= 1; ++dx)
      for (int dy = -1; dy <= 1; ++dy)
        for (int dz = -1; dz <= 1; ++dz) {
          auto it = cells_.find(key({c[0] + dx, c[1] + dy, c[2] + dz}));
          if (it == cells_.end()) continue;
          for (const auto& [p, s] : it->second) {
            double d2 = 0.0;
            for (int k = 0; k < 3; ++k) d2 += (double(p[k]) - q[k]) * (double(p[k]) - q[k]);
            const bool better = owner ? (d2 < best || (d2 == best && s < *owner)) : d2 <= best;
            if (better) {
              best = d2;
              owner = s;
            }
          }
        }
    return owner;
  }

 private:
  using Cell = std::array<long long, 3>;
  Cell cell_of(const Point& p) const {
    return {static_cast<long long>(std::floor(p[0] / cell_)), static_cast<long long>(std::floor(p[1] / cell_)),
            static_cast<long long>(std::floor(p[2] / cell_))};
  }
  static std::tuple<long long, long long, long long> key(const Cell& c) { return {c[0], c[1], c[2]}; }

  double cell_;
  std::map<std::tuple<long long, long long, long long>, std::vector<std::pair<Point, std::size_t>>> cells_;
};

}  // namespace

std::vector<std::vector<std::size_t>> overlap_counts(std::span<const PointSet> predicted, std::span<const PointSet> gt,
                                                     double tolerance) {
  if (!(tolerance > 0.0)) throw ConfigError("match_instances: tolerance must be positive");
  for (std::size_t i = 0; i < predicted.size(); ++i)
    if (predicted[i].empty()) throw ValidationError("match_instances: predicted segment " + std::to_string(i) + " is empty");
  for (std::size_t i = 0; i < gt.size(); ++i)
    if (gt[i].empty()) throw ValidationError("match_instances: ground-truth segment " + std::to_string(i) + " is empty");
  PointGrid grid(gt, tolerance);
  std::vector<std::vector<std::size_t>> counts(predicted.size(), std::vector<std::size_t>(gt.size(), 0));
  for (std::size_t i = 0; i < predicted.size(); ++i)
    for (const auto& p : predicted[i])
      if (auto owner = grid.nearest_owner(p, tolerance)) ++counts[i][*owner];
  return counts;
}

std::vector<std::optional<std::size_t>> match_instances(std::span<const PointSet> predicted,
                                                        std::span<const PointSet> gt, double tolerance) {
  const auto counts = overlap_counts(predicted, gt, tolerance);
  struct Cand {
    std::size_t count, pred, gt;
  };
  std::vector<Cand> cands;
  for (std::size_t i = 0; i < predicted.size(); ++i)
    for (std::size_t j = 0; j < gt.size(); ++j)
      if (counts[i][j] > 0) cands.push_back({counts[i][j], i, j});
  std::sort(cands.begin(), cands.end(), [](const Cand& a, const Cand& b) {
    if (a.count != b.count) return a.count > b.count;
    if (a.pred != b.pred) return a.pred < b.pred;
    return a.gt < b.gt;
  });
  std::vector<std::optional<std::size_t>> out(predicted.size());
  std::vector<bool> taken(gt.size(), false);
  for (const auto& c : cands) {
    if (out[c.pred] || taken[c.gt]) continue;
    out[c.pred] = c.gt;
    taken[c.gt] = true;
  }
  return out;
}

// ---- corpus ---------------------------------------------------------------

Corpus load_corpus(const fs::path& dir) {
  const fs::path manifest = dir / "manifest.json";
  json doc;
  try {
    doc = json::parse(detail::read_text(manifest));
  } catch (const json::parse_error& e) {
    throw FormatError(manifest.string() + ": " + e.what());
  }
  const std::string ctx = manifest.string();
  Corpus c;
  c.classes = as<std::vector<std::string>>(field(doc, "classes", ctx), ctx + ".classes");
  c.predicates = as<std::vector<std::string>>(field(doc, "predicates", ctx), ctx + ".predicates");
  c.feature_dim = as<std::size_t>(field(doc, "feature_dim", ctx), ctx + ".feature_dim");
  for (const auto& name : as<std::vector<std::string>>(field(doc, "scenes", ctx), ctx + ".scenes"))
    c.scenes.push_back(load_scene(dir / name));
  validate(c);
  return c;
}

void save_corpus(const Corpus& c, const fs::path& dir) {
  validate(c);
  fs::create_directories(dir);
  json doc;
  doc["classes"] = c.classes;
  doc["predicates"] = c.predicates;
  doc["feature_dim"] = c.feature_dim;
  doc["scenes"] = json::array();
  for (std::size_t i = 0; i < c.scenes.size(); ++i) {
    char name[32];
    std::snprintf(name, sizeof(name), "scene_%05zu.json", i);
    save_scene(c.scenes[i], dir / name);
    doc["scenes"].push_back(name);
  }
  detail::write_text(dir / "manifest.json", doc.dump(1) + "\n");
}

}  // namespace ssg
