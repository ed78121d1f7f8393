#pragma once

#include <string>
#include <vector>

#include "gs/camera.hpp"
#include "gs/tensor.hpp"

namespace gs {

struct View {
  Tensor image;  // [3,H,W] in [0,1]
  Camera cam;
};

struct SceneSample {
  std::vector<View> inputs;
  std::vector<View> targets;
  std::string name;
};

// Scene directory layout: cameras.json + view_000.png ... for the inputs,
// and the same scheme under targets/ for held-out views.
void save_scene(const std::string& dir, const SceneSample& sample);
SceneSample load_scene(const std::string& dir, bool with_targets = true);

// cameras.json: {"views":[{fx,fy,cx,cy,width,height,world_to_cam[16]}]}
// with world_to_cam in row-major order. Cameras are validated on load.
std::vector<Camera> load_cameras(const std::string& json_path);
void save_cameras(const std::string& json_path, const std::vector<Camera>& cams);

}  // namespace gs
