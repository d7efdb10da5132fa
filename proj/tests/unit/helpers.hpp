#pragma once

#include <atomic>
#include <filesystem>
#include <string>
#include <unistd.h>

#include "ssg/scene.hpp"

namespace testing {

// Fresh directory removed on destruction.
struct TempDir {
  std::filesystem::path path;
  TempDir() {
    static std::atomic<int> counter{0};
    path = std::filesystem::temp_directory_path() /
           ("ssg_unit_" + std::to_string(::getpid()) + "_" + std::to_string(counter++));
    std::filesystem::remove_all(path);
    std::filesystem::create_directories(path);
  }
  ~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path, ec);
  }
  std::filesystem::path operator/(const std::string& name) const { return path / name; }
};

// One view, one labeled node of class 0 at `centroid`.
inline ssg::SceneRecord tiny_scene(std::size_t nodes = 1, std::size_t dim = 2) {
  ssg::SceneRecord s;
  s.scene_id = "tiny";
  s.feature_dim = dim;
  s.classes = {"a", "b"};
  s.predicates = {"none", "near"};
  s.views = {{"v0"}};
  for (std::size_t i = 0; i < nodes; ++i) {
    ssg::NodeInstance n;
    n.node_id = "n" + std::to_string(i);
    n.points = {{0.f, 0.f, 0.f}, {0.1f, 0.2f, 0.3f}};
    n.bbox = {{static_cast<double>(i), 0.0, 0.5}, {1.0, 1.0, 1.0}};
    n.view_features = {{"v0", std::vector<float>(dim, 0.5f)}};
    n.gt_class = static_cast<int>(i % 2);
    s.nodes.push_back(n);
  }
  return s;
}

}  // namespace testing
