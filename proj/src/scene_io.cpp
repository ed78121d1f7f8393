#include <filesystem>
#include <fstream>
#include <iomanip>

#include "gs/png_io.hpp"
#include "gs/scene.hpp"
#include "json.hpp"

namespace fs = std::filesystem;

namespace gs {

namespace {

std::string view_name(int64_t i) {
  std::ostringstream os;
  os << "view_" << std::setw(3) << std::setfill('0') << i << ".png";
  return os.str();
}

void save_views(const std::string& dir, const std::vector<View>& views) {
  fs::create_directories(dir);
  std::vector<Camera> cams;
  for (const View& v : views) cams.push_back(v.cam);
  save_cameras(dir + "/cameras.json", cams);
  for (size_t i = 0; i < views.size(); ++i)
    write_png_rgb(dir + "/" + view_name(static_cast<int64_t>(i)), views[i].image);
}

std::vector<View> load_views(const std::string& dir) {
  std::vector<Camera> cams = load_cameras(dir + "/cameras.json");
  std::vector<View> views;
  for (size_t i = 0; i < cams.size(); ++i) {
    View v;
    v.cam = cams[i];
    std::string img = dir + "/" + view_name(static_cast<int64_t>(i));
    v.image = read_png_rgb(img);
    GS_CHECK(v.image.dim(1) == cams[i].height && v.image.dim(2) == cams[i].width,
             "'" + img + "': size does not match its camera");
    views.push_back(std::move(v));
  }
  return views;
}

}  // namespace

std::vector<Camera> load_cameras(const std::string& json_path) {
  std::ifstream f(json_path);
  GS_CHECK(f.good(), "cannot open '" + json_path + "'");
  nlohmann::json j;
  try {
    f >> j;
  } catch (const std::exception& e) {
    fail("'" + json_path + "': invalid json: " + e.what());
  }
  GS_CHECK(j.contains("views") && j["views"].is_array(),
           "'" + json_path + "': missing \"views\" array");
  std::vector<Camera> cams;
  for (const auto& v : j["views"]) {
    Camera c;
    try {
      c.fx = v.at("fx").get<double>();
      c.fy = v.at("fy").get<double>();
      c.cx = v.at("cx").get<double>();
      c.cy = v.at("cy").get<double>();
      c.width = v.at("width").get<int64_t>();
      c.height = v.at("height").get<int64_t>();
      const auto& m = v.at("world_to_cam");
      GS_CHECK(m.is_array() && m.size() == 16,
               "'" + json_path + "': world_to_cam must have 16 entries");
      for (size_t i = 0; i < 16; ++i) c.w2c[i] = m[i].get<double>();
    } catch (const nlohmann::json::exception& e) {
      fail("'" + json_path + "': bad camera entry: " + e.what());
    }
    c.validate();
    cams.push_back(c);
  }
  GS_CHECK(!cams.empty(), "'" + json_path + "': no views");
  return cams;
}

void save_cameras(const std::string& json_path, const std::vector<Camera>& cams) {
  nlohmann::json j;
  j["views"] = nlohmann::json::array();
  for (const Camera& c : cams) {
    nlohmann::json v;
    v["fx"] = c.fx;
    v["fy"] = c.fy;
    v["cx"] = c.cx;
    v["cy"] = c.cy;
    v["width"] = c.width;
    v["height"] = c.height;
    v["world_to_cam"] = std::vector<double>(c.w2c, c.w2c + 16);
    j["views"].push_back(v);
  }
  std::ofstream f(json_path);
  GS_CHECK(f.good(), "cannot open '" + json_path + "' for writing");
  f << std::setw(2) << j << "\n";
}

void save_scene(const std::string& dir, const SceneSample& sample) {
  GS_CHECK(!sample.inputs.empty(), "save_scene: no input views");
  save_views(dir, sample.inputs);
  if (!sample.targets.empty()) save_views(dir + "/targets", sample.targets);
}

SceneSample load_scene(const std::string& dir, bool with_targets) {
  SceneSample s;
  s.name = fs::path(dir).filename().string();
  s.inputs = load_views(dir);
  if (with_targets) {
    GS_CHECK(fs::exists(dir + "/targets/cameras.json"),
             "'" + dir + "': missing targets/cameras.json");
    s.targets = load_views(dir + "/targets");
  }
  return s;
}

}  // namespace gs
