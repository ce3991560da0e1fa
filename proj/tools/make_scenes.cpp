// Regenerates the JSON files under scenes/ from the procedural generators.

#include <iostream>
#include <string>

#include "rcrb.hpp"
#include "rcrb/io.hpp"

int main(int argc, char** argv) {
  using namespace rcrb;
  using io::json;
  const std::string dir = argc > 1 ? argv[1] : "scenes";
  const auto cam = scenes::default_camera();

  io::write_json_file(dir + "/camera.json", io::to_json(cam));
  io::write_json_file(dir + "/pose.json", io::to_json(Pose::identity()));
  const auto high = scenes::high_texture();
  io::write_json_file(dir + "/high_texture.json", io::to_json(high));
  io::write_json_file(dir + "/low_texture.json", io::to_json(scenes::low_texture()));
  io::write_json_file(dir + "/wall.json", io::to_json(scenes::symmetric_wall()));
  io::write_json_file(dir + "/validation.json", io::to_json(scenes::validation_scene()));
  io::write_json_file(dir + "/high_texture_features.json", io::to_json(scenes::features_from(high)));

  const auto agent = [&](int id, const Pose& rel, int rows, int cols) {
    return json{{"id", id},
                {"camera", io::to_json(cam)},
                {"relative_pose", io::to_json(rel)},
                {"noise", {{"type", "isotropic"}, {"variance", 1e-4}}},
                {"tiles", {rows, cols}}};
  };
  const Pose side(so3_exp(Eigen::Vector3d(0.0, -0.08, 0.0)), Eigen::Vector3d(0.3, 0.0, 0.0));

  io::write_json_file(dir + "/scenario.json",
                      json{{"scene", "high_texture.json"},
                           {"reference_pose", io::to_json(Pose::identity())},
                           {"agents", {agent(0, Pose::identity(), 4, 4), agent(1, side, 4, 4)}},
                           {"budgets", {{"per_agent", {{"0", 6}, {"1", 6}}}, {"global", 8}}},
                           {"objective", {{"type", "logdet"}, {"epsilon", 1e-6}}}});

  io::write_json_file(dir + "/scenario_small.json",
                      json{{"scene", "high_texture.json"},
                           {"reference_pose", io::to_json(Pose::identity())},
                           {"agents", {agent(0, Pose::identity(), 2, 3), agent(1, side, 2, 3)}},
                           {"budgets", {{"per_agent", {{"0", 3}, {"1", 3}}}, {"global", 4}}},
                           {"objective", {{"type", "trace"}}}});

  // two symmetric walls seen head-on by two cameras with orthogonal optical axes
  const Pose turn(so3_exp(Eigen::Vector3d(0.0, kPi / 2.0, 0.0)), Eigen::Vector3d::Zero());
  auto walls = scenes::symmetric_wall();
  const auto other = scenes::symmetric_wall(3.0, 1.0, 0.1, turn);
  walls.splats.insert(walls.splats.end(), other.splats.begin(), other.splats.end());
  io::write_json_file(dir + "/walls.json", io::to_json(walls));
  auto wall_agent = [&](int id, const Pose& rel) {
    return json{{"id", id},
                {"camera", io::to_json(cam)},
                {"relative_pose", io::to_json(rel)},
                {"noise", {{"type", "isotropic"}, {"variance", 1e-4}}},
                {"tiles", {1, 1}}};
  };
  io::write_json_file(dir + "/scenario_walls.json",
                      json{{"scene", "walls.json"},
                           {"reference_pose", io::to_json(Pose::identity())},
                           {"agents", {wall_agent(0, Pose::identity()), wall_agent(1, turn)}},
                           {"budgets", {{"global", 2}}},
                           {"objective", {{"type", "logdet"}, {"epsilon", 1e-6}}}});
  std::cout << "scenes written to " << dir << "\n";
  return 0;
}
