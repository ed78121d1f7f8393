#pragma once

#include <memory>
#include <vector>

#include "gs/scene.hpp"
#include "gs/vecmath.hpp"

namespace gs {

struct SceneGenConfig {
  int64_t n_inputs = 2;
  int64_t n_targets = 4;
  int64_t width = 64, height = 64;
  int64_t n_objects = 4;
  double d_near = 1.0, d_far = 10.0;
  double fov_deg = 100.0;
};

struct SceneGeometry;

struct GeneratedScene {
  SceneSample sample;
  // Marked surface points on the backdrop, for cross-view consistency checks.
  std::vector<Vec3> anchors;
  // Ray-traced depth per input view, [H,W]; every entry in [d_near, d_far].
  std::vector<Tensor> input_depths;
  std::shared_ptr<const SceneGeometry> geometry;
};

// Deterministic per (config, seed): textured spheres in the camera frustum at
// mid depths plus a slightly tilted backdrop plane that closes every ray.
// Inputs sit on a lateral arc (two views -> nonzero baseline); targets get
// jittered in-between poses. Textures are smooth 3D fields attached to world
// space, so all views are photo-consistent by construction.
GeneratedScene generate_scene(const SceneGenConfig& cfg, uint64_t seed);

struct TraceHit {
  bool hit = false;
  Vec3 point;
  double depth = 0;
  Vec3 color;
};

// Traces the generator's exact ray for pixel (px, py), which may be
// fractional, through an arbitrary camera.
TraceHit trace_scene_ray(const GeneratedScene& scene, const Camera& cam, double px, double py);

}  // namespace gs
