#include "gs/config.hpp"

#include <fstream>
#include <sstream>
#include <stdexcept>

#include "json.hpp"

namespace gs {
namespace {

using ordered_json = nlohmann::ordered_json;

[[noreturn]] void cfg_fail(const std::string& msg) { throw std::runtime_error("config: " + msg); }

// Reads every key of one section through a dispatch callback that returns
// false for keys it does not know.
template <typename Fn>
void read_section(const ordered_json& doc, const std::string& section, Fn&& dispatch) {
  if (!doc.contains(section)) return;
  const ordered_json& sec = doc.at(section);
  if (!sec.is_object()) cfg_fail("section '" + section + "' must be an object");
  for (const auto& [key, value] : sec.items()) {
    try {
      if (!dispatch(key, value)) cfg_fail("unknown key '" + section + "." + key + "'");
    } catch (const nlohmann::json::exception& e) {
      cfg_fail("bad value for '" + section + "." + key + "': " + e.what());
    }
  }
}

}  // namespace

void AppConfig::validate() const {
  if (n_scenes < 1) cfg_fail("data: scenes must be positive");
  if (data.n_inputs < 1 || data.n_targets < 1) cfg_fail("data: views and targets must be positive");
  if (data.width < 16 || data.height < 16) cfg_fail("data: resolution must be at least 16");
  if (data.n_objects < 1) cfg_fail("data: objects must be positive");
  if (!(data.d_near > 0 && data.d_far > data.d_near)) cfg_fail("data: need 0 < near < far");
  if (!(data.fov_deg > 10 && data.fov_deg < 170)) cfg_fail("data: fov_deg out of range");
  pipe.validate();
  train.validate();
}

AppConfig config_from_json(const std::string& text) {
  ordered_json doc;
  try {
    doc = ordered_json::parse(text);
  } catch (const nlohmann::json::exception& e) {
    cfg_fail(std::string("malformed JSON: ") + e.what());
  }
  if (!doc.is_object()) cfg_fail("top level must be an object");

  AppConfig c;
  for (const auto& [section, value] : doc.items()) {
    (void)value;
    if (section != "data" && section != "encoder" && section != "cga" && section != "igr" &&
        section != "rasterizer" && section != "train")
      cfg_fail("unknown section '" + section + "'");
  }

  read_section(doc, "data", [&](const std::string& k, const ordered_json& v) {
    if (k == "scenes") c.n_scenes = v.get<int64_t>();
    else if (k == "views") c.data.n_inputs = v.get<int64_t>();
    else if (k == "targets") c.data.n_targets = v.get<int64_t>();
    else if (k == "width") c.data.width = v.get<int64_t>();
    else if (k == "height") c.data.height = v.get<int64_t>();
    else if (k == "objects") c.data.n_objects = v.get<int64_t>();
    else if (k == "near") c.data.d_near = v.get<double>();
    else if (k == "far") c.data.d_far = v.get<double>();
    else if (k == "fov_deg") c.data.fov_deg = v.get<double>();
    else return false;
    return true;
  });

  read_section(doc, "encoder", [&](const std::string& k, const ordered_json& v) {
    if (k == "base_width") c.pipe.encoder.base_width = v.get<int64_t>();
    else if (k == "attn_blocks") c.pipe.encoder.attn_blocks = v.get<int64_t>();
    else if (k == "attn_heads") c.pipe.encoder.attn_heads = v.get<int64_t>();
    else if (k == "depth_planes") c.pipe.encoder.depth_planes = v.get<int64_t>();
    else if (k == "d_near") c.pipe.encoder.d_near = v.get<double>();
    else if (k == "d_far") c.pipe.encoder.d_far = v.get<double>();
    else if (k == "init_alpha") c.pipe.init.alpha0 = v.get<double>();
    else if (k == "init_scale_gain") c.pipe.init.scale_gain = v.get<double>();
    else if (k == "init_s_lo") c.pipe.init.s_lo = v.get<double>();
    else if (k == "init_s_hi") c.pipe.init.s_hi = v.get<double>();
    else if (k == "sh_dim") c.pipe.init.sh_dim = v.get<int64_t>();
    else return false;
    return true;
  });

  read_section(doc, "cga", [&](const std::string& k, const ordered_json& v) {
    if (k == "enabled") c.pipe.use_cga = v.get<bool>();
    else if (k == "stages") c.pipe.cga.stages = v.get<int64_t>();
    else if (k == "children") c.pipe.cga.children = v.get<int64_t>();
    else if (k == "gamma_alpha") c.pipe.cga.gamma_alpha = v.get<double>();
    else if (k == "gamma_s") c.pipe.cga.gamma_s = v.get<double>();
    else if (k == "tau_alpha") c.pipe.cga.tau_alpha = v.get<double>();
    else if (k == "temperature") c.pipe.cga.temperature = v.get<double>();
    else if (k == "max_queries") c.pipe.cga.max_queries = v.get<int64_t>();
    else if (k == "fixed_tau_low") c.pipe.cga.fixed_tau_low = v.get<double>();
    else if (k == "fixed_tau_high") c.pipe.cga.fixed_tau_high = v.get<double>();
    else return false;
    return true;
  });

  read_section(doc, "igr", [&](const std::string& k, const ordered_json& v) {
    if (k == "enabled") c.pipe.use_igr = v.get<bool>();
    else if (k == "blocks") c.pipe.igr.blocks = v.get<int64_t>();
    else if (k == "heads") c.pipe.igr.heads = v.get<int64_t>();
    else if (k == "points") c.pipe.igr.points = v.get<int64_t>();
    else if (k == "d_model") c.pipe.igr.d_model = v.get<int64_t>();
    else if (k == "hidden") c.pipe.igr.hidden = v.get<int64_t>();
    else return false;
    return true;
  });

  read_section(doc, "rasterizer", [&](const std::string& k, const ordered_json& v) {
    if (k == "tile_size") c.pipe.raster.tile_size = v.get<int>();
    else if (k == "background") {
      if (!v.is_array() || v.size() != 3) cfg_fail("rasterizer.background must be [r,g,b]");
      c.pipe.raster.background = Vec3{v[0].get<double>(), v[1].get<double>(), v[2].get<double>()};
    } else if (k == "eps_alpha") c.pipe.raster.eps_alpha = v.get<double>();
    else if (k == "sigma_cull") c.pipe.raster.sigma_cull = v.get<double>();
    else if (k == "w_max") c.pipe.raster.w_max = v.get<double>();
    else if (k == "transmittance_stop") c.pipe.raster.transmittance_stop = v.get<double>();
    else if (k == "z_near") c.pipe.raster.z_near = v.get<double>();
    else return false;
    return true;
  });

  read_section(doc, "train", [&](const std::string& k, const ordered_json& v) {
    if (k == "steps") c.train.steps = v.get<int64_t>();
    else if (k == "lr") c.train.lr = v.get<double>();
    else if (k == "weight_decay") c.train.weight_decay = v.get<double>();
    else if (k == "lambda_perc") c.train.lambda_perc = v.get<double>();
    else if (k == "grad_accum") c.train.grad_accum = v.get<int64_t>();
    else if (k == "log_every") c.train.log_every = v.get<int64_t>();
    else if (k == "checkpoint_every") c.train.checkpoint_every = v.get<int64_t>();
    else if (k == "seed") c.train.seed = v.get<int64_t>();
    else return false;
    return true;
  });

  return c;
}

std::string config_to_json(const AppConfig& c) {
  ordered_json doc;
  ordered_json& d = doc["data"];
  d["scenes"] = c.n_scenes;
  d["views"] = c.data.n_inputs;
  d["targets"] = c.data.n_targets;
  d["width"] = c.data.width;
  d["height"] = c.data.height;
  d["objects"] = c.data.n_objects;
  d["near"] = c.data.d_near;
  d["far"] = c.data.d_far;
  d["fov_deg"] = c.data.fov_deg;

  ordered_json& e = doc["encoder"];
  e["base_width"] = c.pipe.encoder.base_width;
  e["attn_blocks"] = c.pipe.encoder.attn_blocks;
  e["attn_heads"] = c.pipe.encoder.attn_heads;
  e["depth_planes"] = c.pipe.encoder.depth_planes;
  e["d_near"] = c.pipe.encoder.d_near;
  e["d_far"] = c.pipe.encoder.d_far;
  e["init_alpha"] = c.pipe.init.alpha0;
  e["init_scale_gain"] = c.pipe.init.scale_gain;
  e["init_s_lo"] = c.pipe.init.s_lo;
  e["init_s_hi"] = c.pipe.init.s_hi;
  e["sh_dim"] = c.pipe.init.sh_dim;

  ordered_json& g = doc["cga"];
  g["enabled"] = c.pipe.use_cga;
  g["stages"] = c.pipe.cga.stages;
  g["children"] = c.pipe.cga.children;
  g["gamma_alpha"] = c.pipe.cga.gamma_alpha;
  g["gamma_s"] = c.pipe.cga.gamma_s;
  g["tau_alpha"] = c.pipe.cga.tau_alpha;
  g["temperature"] = c.pipe.cga.temperature;
  g["max_queries"] = c.pipe.cga.max_queries;
  if (!std::isnan(c.pipe.cga.fixed_tau_low)) g["fixed_tau_low"] = c.pipe.cga.fixed_tau_low;
  if (!std::isnan(c.pipe.cga.fixed_tau_high)) g["fixed_tau_high"] = c.pipe.cga.fixed_tau_high;

  ordered_json& i = doc["igr"];
  i["enabled"] = c.pipe.use_igr;
  i["blocks"] = c.pipe.igr.blocks;
  i["heads"] = c.pipe.igr.heads;
  i["points"] = c.pipe.igr.points;
  i["d_model"] = c.pipe.igr.d_model;
  i["hidden"] = c.pipe.igr.hidden;

  ordered_json& r = doc["rasterizer"];
  r["tile_size"] = c.pipe.raster.tile_size;
  r["background"] = {c.pipe.raster.background.x, c.pipe.raster.background.y,
                     c.pipe.raster.background.z};
  r["eps_alpha"] = c.pipe.raster.eps_alpha;
  r["sigma_cull"] = c.pipe.raster.sigma_cull;
  r["w_max"] = c.pipe.raster.w_max;
  r["transmittance_stop"] = c.pipe.raster.transmittance_stop;
  r["z_near"] = c.pipe.raster.z_near;

  ordered_json& t = doc["train"];
  t["steps"] = c.train.steps;
  t["lr"] = c.train.lr;
  t["weight_decay"] = c.train.weight_decay;
  t["lambda_perc"] = c.train.lambda_perc;
  t["grad_accum"] = c.train.grad_accum;
  t["log_every"] = c.train.log_every;
  t["checkpoint_every"] = c.train.checkpoint_every;
  t["seed"] = c.train.seed;

  return doc.dump(2) + "\n";
}

AppConfig load_config(const std::string& path) {
  std::ifstream in(path);
  if (!in.good()) cfg_fail("cannot read '" + path + "'");
  std::ostringstream buf;
  buf << in.rdbuf();
  return config_from_json(buf.str());
}

void save_config(const std::string& path, const AppConfig& cfg) {
  std::ofstream out(path);
  if (!out.good()) cfg_fail("cannot write '" + path + "'");
  out << config_to_json(cfg);
}

}  // namespace gs
