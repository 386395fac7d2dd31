#pragma once

#include <cstdint>
#include <vector>

#include "afford/rng.hpp"

namespace afford {

constexpr int kOrientationCount = 8;

enum class TaskKind { GraspCube, GraspShapes, StackCube, OpenDrawer };
enum class Primitive { Grasp, Stack, Open };
enum class ObjectKind { Box, Pin, Plate, DrawerCabinet };

/// One affordance primitive application: pixel position plus an index into
/// the discrete orientation set (8 angles).
struct Action {
  int row = 0;
  int col = 0;
  int orientation = 0;
};

struct Outcome {
  int success = 0;  // binary
};

struct Cell {
  int row = 0;
  int col = 0;
  bool operator==(const Cell&) const = default;
};

/// The bandit context x: a normalized heightmap plus workspace validity.
struct SceneObservation {
  int height = 0, width = 0;
  std::vector<double> heightmap;         // row-major, values in [0,1], background 0
  std::vector<std::uint8_t> valid_mask;  // 1 = usable workspace cell

  double height_at(int r, int c) const { return heightmap[static_cast<std::size_t>(r) * width + c]; }
  bool valid_at(int r, int c) const { return valid_mask[static_cast<std::size_t>(r) * width + c] != 0; }
};

struct SceneObject {
  ObjectKind kind = ObjectKind::Box;
  // Rotated-rectangle geometry. The center sits on a grid corner so that
  // axis-aligned footprints rasterize to exactly length x width cells.
  double center_row = 0.0, center_col = 0.0;
  int angle_index = 0;  // long-axis angle = angle_index * pi/8 (cabinets: facing/2)
  int length_cells = 0, width_cells = 0;
  double height_value = 0.0;
  std::vector<Cell> footprint;
  std::vector<Cell> graspable_cells;
  std::vector<Cell> stack_target_cells;
  std::vector<Cell> handle_cells;
  int outward_normal_index = -1;  // cabinets: pull direction on the 8-way ring (k*pi/4)
};

struct SceneConfig {
  int grid_size = 64;
  double label_noise = 0.05;  // eta: success -> failure flip rate
  int gripper_opening = 6;    // max graspable width in cells
  int border_margin = 2;      // invalid frame width
  int forbidden_cols = 4;     // unusable strip at the left edge (robot base analog)
  int held_piece_side = 6;    // stacking: side of the square held piece
  double mix_box = 0.4, mix_pin = 0.4, mix_plate = 0.2;  // GraspShapes kind mixture
};

struct Scene {
  TaskKind task = TaskKind::GraspCube;
  SceneConfig config;
  std::vector<SceneObject> objects;
};

Primitive primitive_for(TaskKind task);

/// Distinct evaluation variants per task (GraspShapes: graspable kinds;
/// OpenDrawer: cabinet models).
int scene_variant_count(TaskKind task);

/// Place 1-3 non-overlapping objects uniformly inside the valid workspace.
/// forced_variant pins the evaluation variant (kind / cabinet model); -1
/// samples freely. Never returns an invalid scene: if placement fails after
/// 100 attempts per object, the scene is regenerated with fewer objects.
Scene generate_scene(TaskKind task, const SceneConfig& config, Rng& rng, int forced_variant = -1);

SceneObservation render_observation(const Scene& scene);

/// Exact ground-truth success probability: (1-eta) where the primitive's
/// geometric rule is satisfied, 0 everywhere else.
double oracle_success_prob(const Scene& scene, const Action& action, Primitive primitive);

/// Bernoulli draw with the oracle probability. Always consumes exactly one
/// rng draw so per-interaction streams stay aligned across policies. Actions
/// on masked-invalid cells waste the interaction (failure), actions outside
/// the grid violate the Action invariant and are rejected.
Outcome execute(const Scene& scene, const Action& action, Primitive primitive, Rng& rng);

/// Relative cell offsets of the held piece footprint at a given orientation
/// (stacking). Offsets are half-open ([-s/2, s/2) along each axis) so the
/// axis-aligned piece covers exactly s x s cells.
std::vector<Cell> held_piece_offsets(int orientation, int side);

bool workspace_valid(const SceneConfig& config, int row, int col);

}  // namespace afford
