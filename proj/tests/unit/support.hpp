#ifndef SONARGEN_TEST_SUPPORT_HPP
#define SONARGEN_TEST_SUPPORT_HPP

#include "sonargen/gan/trainer.hpp"
#include "sonargen/image_io.hpp"
#include "sonargen/mission.hpp"

#include <algorithm>
#include <filesystem>
#include <random>
#include <string>

namespace sonargen::test {

/// Fresh directory under the system temp dir, removed on destruction.
struct TempDir {
  std::filesystem::path path;
  explicit TempDir(const std::string& name) {
    path = std::filesystem::temp_directory_path() / ("sonargen_" + name + "_" + std::to_string(std::random_device{}()));
    std::filesystem::remove_all(path);
    std::filesystem::create_directories(path);
  }
  ~TempDir() { std::filesystem::remove_all(path); }
  std::filesystem::path operator/(const std::string& p) const { return path / p; }
};

inline WorldMap empty_world(double w = 200, double h = 200, TerrainLabel bg = TerrainLabel::flat) {
  WorldMap m;
  m.width_m = w;
  m.height_m = h;
  m.background_label = bg;
  return m;
}

inline Region box(double x0, double y0, double x1, double y1, TerrainLabel l) {
  Region r;
  r.polygon = {{x0, y0}, {x1, y0}, {x1, y1}, {x0, y1}};
  r.label = l;
  return r;
}

inline MissionSpec straight_mission(Vec2 from, Vec2 to, int swath_px = 128) {
  MissionSpec m;
  m.waypoints = {from, to};
  m.swath_px = swath_px;
  m.nadir_px = std::min(m.nadir_px, std::max(1, swath_px / 4));
  return m;
}

/// Small untrained generator/discriminator pair.
inline std::shared_ptr<gan::Model> tiny_model(int rows = 116, int cols = 128, int width = 4) {
  nn::GeneratorConfig g = gan::desk_generator_config();
  g.base_width = width;
  g.n_resnet_blocks = 2;
  nn::DiscriminatorConfig d = gan::desk_discriminator_config();
  d.base_width = width;
  auto m = std::make_shared<gan::Model>(g, d, ConditioningConfig::for_tile_rows(rows), rows, cols);
  m->initialize(3);
  return m;
}

}  // namespace sonargen::test

#endif  // SONARGEN_TEST_SUPPORT_HPP
