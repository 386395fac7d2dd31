#include "afford/scene.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <stdexcept>

namespace afford {

namespace {

constexpr double kBoxHeight = 0.5;
constexpr double kPinHeight = 0.35;
constexpr double kPlateHeight = 0.15;
constexpr double kCabinetHeight = 0.6;
constexpr double kHandleHeight = 0.8;

struct CabinetSpec {
  int length, width, handle_halfwidth;
};
// Six cabinet models, the OpenDrawer evaluation variants.
constexpr CabinetSpec kCabinets[6] = {{16, 10, 2}, {14, 8, 2}, {18, 10, 3}, {12, 8, 1}, {16, 8, 2}, {14, 10, 3}};

double angle_of(int angle_index) { return angle_index * std::numbers::pi / kOrientationCount; }

// Project a grid offset onto the object's long/short axes.
void project(double dr, double dc, double angle, double& u, double& v) {
  const double s = std::sin(angle), c = std::cos(angle);
  u = dr * s + dc * c;
  v = dr * c - dc * s;
}

int ring_distance(int a, int b) {
  const int d = std::abs(a - b) % kOrientationCount;
  return std::min(d, kOrientationCount - d);
}

std::vector<Cell> rasterize_rect(double center_row, double center_col, double angle, double length, double width) {
  std::vector<Cell> cells;
  const double radius = 0.5 * std::hypot(length, width) + 1.0;
  const int r_lo = static_cast<int>(std::floor(center_row - radius));
  const int r_hi = static_cast<int>(std::ceil(center_row + radius));
  const int c_lo = static_cast<int>(std::floor(center_col - radius));
  const int c_hi = static_cast<int>(std::ceil(center_col + radius));
  for (int r = r_lo; r <= r_hi; ++r) {
    for (int c = c_lo; c <= c_hi; ++c) {
      double u, v;
      project(r + 0.5 - center_row, c + 0.5 - center_col, angle, u, v);
      if (std::abs(u) <= length / 2.0 && std::abs(v) <= width / 2.0) cells.push_back({r, c});
    }
  }
  return cells;
}

void build_object_cells(SceneObject& obj, const SceneConfig& cfg) {
  const double angle = angle_of(obj.angle_index);
  obj.footprint = rasterize_rect(obj.center_row, obj.center_col, angle, obj.length_cells, obj.width_cells);
  obj.graspable_cells.clear();
  obj.stack_target_cells.clear();
  obj.handle_cells.clear();
  switch (obj.kind) {
    case ObjectKind::Box:
      obj.height_value = kBoxHeight;
      if (obj.width_cells <= cfg.gripper_opening) obj.graspable_cells = obj.footprint;
      break;
    case ObjectKind::Pin: {
      obj.height_value = kPinHeight;
      // Grasp points concentrate at the two end caps of the pin.
      for (const Cell& cell : obj.footprint) {
        double u, v;
        project(cell.row + 0.5 - obj.center_row, cell.col + 0.5 - obj.center_col, angle, u, v);
        if (std::abs(u) >= obj.length_cells / 2.0 - 3.0) obj.graspable_cells.push_back(cell);
      }
      break;
    }
    case ObjectKind::Plate:
      obj.height_value = kPlateHeight;
      // Too wide for the gripper; serves as the stacking base.
      obj.stack_target_cells = obj.footprint;
      break;
    case ObjectKind::DrawerCabinet:
      obj.height_value = kCabinetHeight;  // handle cells filled by build_cabinet_cells
      break;
  }
}

void build_cabinet_cells(SceneObject& obj, int handle_halfwidth) {
  const double angle = angle_of(obj.angle_index);
  const double facing_sign = obj.outward_normal_index < kOrientationCount / 2 ? 1.0 : -1.0;
  obj.height_value = kCabinetHeight;
  for (const Cell& cell : obj.footprint) {
    double u, v;
    project(cell.row + 0.5 - obj.center_row, cell.col + 0.5 - obj.center_col, angle, u, v);
    if (facing_sign * u >= obj.length_cells / 2.0 - 2.0 && std::abs(v) <= handle_halfwidth)
      obj.handle_cells.push_back(cell);
  }
}

SceneObject make_object(ObjectKind kind, int cabinet_variant, Rng& rng) {
  SceneObject obj;
  obj.kind = kind;
  switch (kind) {
    case ObjectKind::Box:
      obj.length_cells = 6;
      obj.width_cells = 6;
      obj.angle_index = rng.uniform_int(kOrientationCount);
      break;
    case ObjectKind::Pin:
      obj.length_cells = 12;
      obj.width_cells = 3;
      obj.angle_index = rng.uniform_int(kOrientationCount);
      break;
    case ObjectKind::Plate:
      obj.length_cells = 14;
      obj.width_cells = 10;
      obj.angle_index = rng.uniform_int(kOrientationCount);
      break;
    case ObjectKind::DrawerCabinet: {
      const CabinetSpec& spec = kCabinets[cabinet_variant];
      obj.length_cells = spec.length;
      obj.width_cells = spec.width;
      // Facing picks both the body angle (multiples of pi/4) and the pull side.
      obj.outward_normal_index = rng.uniform_int(kOrientationCount);
      obj.angle_index = (obj.outward_normal_index % 4) * 2;
      break;
    }
  }
  return obj;
}

bool try_place(SceneObject& obj, const SceneConfig& cfg, const std::vector<SceneObject>& placed, Rng& rng,
               int cabinet_variant) {
  const int g = cfg.grid_size;
  for (int attempt = 0; attempt < 100; ++attempt) {
    obj.center_row = rng.uniform_int(g + 1);
    obj.center_col = rng.uniform_int(g + 1);
    build_object_cells(obj, cfg);
    if (obj.kind == ObjectKind::DrawerCabinet) build_cabinet_cells(obj, kCabinets[cabinet_variant].handle_halfwidth);
    bool ok = true;
    for (const Cell& cell : obj.footprint) {
      if (cell.row < 0 || cell.row >= g || cell.col < 0 || cell.col >= g || !workspace_valid(cfg, cell.row, cell.col)) {
        ok = false;
        break;
      }
    }
    if (ok) {
      for (const SceneObject& other : placed) {
        for (const Cell& cell : obj.footprint) {
          if (std::find(other.footprint.begin(), other.footprint.end(), cell) != other.footprint.end()) {
            ok = false;
            break;
          }
        }
        if (!ok) break;
      }
    }
    if (ok) return true;
  }
  return false;
}

ObjectKind sample_mixture_kind(const SceneConfig& cfg, Rng& rng) {
  const double total = cfg.mix_box + cfg.mix_pin + cfg.mix_plate;
  const double u = rng.uniform01() * total;
  if (u < cfg.mix_box) return ObjectKind::Box;
  if (u < cfg.mix_box + cfg.mix_pin) return ObjectKind::Pin;
  return ObjectKind::Plate;
}

const SceneObject* owner_of(const Scene& scene, const Cell& cell, const std::vector<Cell> SceneObject::*cells) {
  for (const SceneObject& obj : scene.objects) {
    const std::vector<Cell>& set = obj.*cells;
    if (std::find(set.begin(), set.end(), cell) != set.end()) return &obj;
  }
  return nullptr;
}

}  // namespace

bool workspace_valid(const SceneConfig& cfg, int row, int col) {
  const int g = cfg.grid_size;
  if (row < cfg.border_margin || row >= g - cfg.border_margin) return false;
  if (col < cfg.border_margin || col >= g - cfg.border_margin) return false;
  if (col < cfg.forbidden_cols) return false;
  return true;
}

Primitive primitive_for(TaskKind task) {
  switch (task) {
    case TaskKind::GraspCube:
    case TaskKind::GraspShapes:
      return Primitive::Grasp;
    case TaskKind::StackCube:
      return Primitive::Stack;
    case TaskKind::OpenDrawer:
      return Primitive::Open;
  }
  throw std::invalid_argument("unknown task");
}

int scene_variant_count(TaskKind task) {
  switch (task) {
    case TaskKind::GraspCube:
    case TaskKind::StackCube:
      return 1;
    case TaskKind::GraspShapes:
      return 2;  // box, pin (plate is a distractor, not graspable)
    case TaskKind::OpenDrawer:
      return 6;
  }
  throw std::invalid_argument("unknown task");
}

Scene generate_scene(TaskKind task, const SceneConfig& cfg, Rng& rng, int forced_variant) {
  Scene scene;
  scene.task = task;
  scene.config = cfg;

  // Kind list per task; distractors may be dropped if placement gets tight.
  std::vector<std::pair<ObjectKind, int>> wanted;  // (kind, cabinet variant)
  switch (task) {
    case TaskKind::GraspCube:
      wanted.push_back({ObjectKind::Box, 0});
      break;
    case TaskKind::GraspShapes: {
      if (forced_variant >= 0) {
        wanted.push_back({forced_variant == 0 ? ObjectKind::Box : ObjectKind::Pin, 0});
      } else {
        const int count = 1 + rng.uniform_int(3);
        for (int i = 0; i < count; ++i) wanted.push_back({sample_mixture_kind(cfg, rng), 0});
      }
      break;
    }
    case TaskKind::StackCube:
      wanted.push_back({ObjectKind::Plate, 0});
      if (rng.bernoulli(0.5)) wanted.push_back({ObjectKind::Pin, 0});
      break;
    case TaskKind::OpenDrawer: {
      const int variant = forced_variant >= 0 ? forced_variant : rng.uniform_int(6);
      wanted.push_back({ObjectKind::DrawerCabinet, variant});
      if (rng.bernoulli(0.5)) wanted.push_back({ObjectKind::Box, 0});
      break;
    }
  }

  while (true) {
    scene.objects.clear();
    bool all_placed = true;
    for (const auto& [kind, variant] : wanted) {
      SceneObject obj = make_object(kind, variant, rng);
      if (try_place(obj, cfg, scene.objects, rng, variant)) {
        scene.objects.push_back(std::move(obj));
      } else {
        all_placed = false;
        break;
      }
    }
    if (all_placed) return scene;
    if (wanted.size() > 1) wanted.pop_back();  // regenerate with fewer objects
  }
}

SceneObservation render_observation(const Scene& scene) {
  const int g = scene.config.grid_size;
  SceneObservation obs;
  obs.height = g;
  obs.width = g;
  obs.heightmap.assign(static_cast<std::size_t>(g) * g, 0.0);
  obs.valid_mask.assign(static_cast<std::size_t>(g) * g, 0);
  for (int r = 0; r < g; ++r)
    for (int c = 0; c < g; ++c) obs.valid_mask[static_cast<std::size_t>(r) * g + c] = workspace_valid(scene.config, r, c) ? 1 : 0;
  for (const SceneObject& obj : scene.objects) {
    for (const Cell& cell : obj.footprint)
      obs.heightmap[static_cast<std::size_t>(cell.row) * g + cell.col] = obj.height_value;
    for (const Cell& cell : obj.handle_cells)
      obs.heightmap[static_cast<std::size_t>(cell.row) * g + cell.col] = kHandleHeight;
  }
  return obs;
}

std::vector<Cell> held_piece_offsets(int orientation, int side) {
  const double angle = angle_of(orientation);
  std::vector<Cell> offsets;
  const int radius = side;  // generous bound
  const double half = side / 2.0;
  for (int dr = -radius; dr <= radius; ++dr) {
    for (int dc = -radius; dc <= radius; ++dc) {
      double u, v;
      project(dr, dc, angle, u, v);
      if (u >= -half && u < half && v >= -half && v < half) offsets.push_back({dr, dc});
    }
  }
  return offsets;
}

double oracle_success_prob(const Scene& scene, const Action& action, Primitive primitive) {
  const SceneConfig& cfg = scene.config;
  const int g = cfg.grid_size;
  if (action.row < 0 || action.row >= g || action.col < 0 || action.col >= g)
    throw std::invalid_argument("oracle_success_prob: action outside the grid");
  if (action.orientation < 0 || action.orientation >= kOrientationCount)
    throw std::invalid_argument("oracle_success_prob: orientation index out of range");
  if (!workspace_valid(cfg, action.row, action.col)) return 0.0;

  const Cell cell{action.row, action.col};
  bool satisfied = false;
  switch (primitive) {
    case Primitive::Grasp: {
      const SceneObject* obj = owner_of(scene, cell, &SceneObject::graspable_cells);
      if (obj != nullptr && obj->width_cells <= cfg.gripper_opening) {
        // Gripper must close across the short axis: orientation perpendicular
        // to the long axis, or either axis for a square object.
        const int perp = (obj->angle_index + 4) % kOrientationCount;
        satisfied = action.orientation == perp ||
                    (obj->length_cells == obj->width_cells && action.orientation == obj->angle_index);
      }
      break;
    }
    case Primitive::Stack: {
      const std::vector<Cell> offsets = held_piece_offsets(action.orientation, cfg.held_piece_side);
      for (const SceneObject& obj : scene.objects) {
        if (obj.stack_target_cells.empty()) continue;
        bool fits = true;
        for (const Cell& off : offsets) {
          const Cell target{action.row + off.row, action.col + off.col};
          if (std::find(obj.stack_target_cells.begin(), obj.stack_target_cells.end(), target) ==
              obj.stack_target_cells.end()) {
            fits = false;
            break;
          }
        }
        if (fits) {
          satisfied = true;
          break;
        }
      }
      break;
    }
    case Primitive::Open: {
      const SceneObject* obj = owner_of(scene, cell, &SceneObject::handle_cells);
      satisfied = obj != nullptr && ring_distance(action.orientation, obj->outward_normal_index) <= 1;
      break;
    }
  }
  return satisfied ? 1.0 - cfg.label_noise : 0.0;
}

Outcome execute(const Scene& scene, const Action& action, Primitive primitive, Rng& rng) {
  const int g = scene.config.grid_size;
  if (action.row < 0 || action.row >= g || action.col < 0 || action.col >= g)
    throw std::invalid_argument("execute: action outside the grid");
  double p = 0.0;
  if (workspace_valid(scene.config, action.row, action.col))
    p = oracle_success_prob(scene, action, primitive);
  // One draw regardless of p so rng streams stay aligned across policies.
  const bool success = rng.bernoulli(p);
  return Outcome{success ? 1 : 0};
}

}  // namespace afford
