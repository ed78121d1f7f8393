#include "gs/scene_gen.hpp"

#include <cmath>

#include "gs/rng.hpp"

namespace gs {

namespace {

struct TextureField {
  Vec3 base;
  // three harmonics per channel: color = base + sum amp*sin(dot(k, p) + phase)
  Vec3 k[3];
  double amp[3];
  double phase[3];

  Vec3 eval(const Vec3& p) const {
    double wave = 0;
    for (int h = 0; h < 3; ++h) wave += amp[h] * std::sin(k[h].dot(p) + phase[h]);
    auto clamp01 = [](double v) { return std::min(0.98, std::max(0.02, v)); };
    return {clamp01(base.x + wave), clamp01(base.y + 0.8 * wave), clamp01(base.z - 0.6 * wave)};
  }
};

struct Sphere {
  Vec3 center;
  double radius;
  TextureField tex;
};

}  // namespace

struct SceneGeometry {
  std::vector<Sphere> spheres;
  Vec3 plane_point, plane_normal;
  TextureField plane_tex;
  Vec3 light;
};

namespace {

TextureField random_texture(Rng& rng, double freq_lo, double freq_hi) {
  TextureField t;
  t.base = {rng.uniform(0.3, 0.7), rng.uniform(0.3, 0.7), rng.uniform(0.3, 0.7)};
  for (int h = 0; h < 3; ++h) {
    Vec3 dir = {rng.normal(), rng.normal(), rng.normal()};
    t.k[h] = dir.normalized() * rng.uniform(freq_lo, freq_hi);
    t.amp[h] = rng.uniform(0.04, 0.09);
    t.phase[h] = rng.uniform(0.0, 2.0 * M_PI);
  }
  return t;
}

Camera look_at_camera(const Vec3& pos, const Vec3& target, double fx, int64_t w, int64_t h) {
  // y points down in both world and camera space
  Vec3 forward = (target - pos).normalized();
  Vec3 down = {0, 1, 0};
  Vec3 right = down.cross(forward).normalized();
  Vec3 camy = forward.cross(right);
  Camera c;
  c.fx = fx;
  c.fy = fx;
  c.cx = (static_cast<double>(w) - 1.0) / 2.0;
  c.cy = (static_cast<double>(h) - 1.0) / 2.0;
  c.width = w;
  c.height = h;
  const Vec3 rows[3] = {right, camy, forward};
  for (int r = 0; r < 3; ++r) {
    c.w2c[r * 4 + 0] = rows[r].x;
    c.w2c[r * 4 + 1] = rows[r].y;
    c.w2c[r * 4 + 2] = rows[r].z;
    c.w2c[r * 4 + 3] = -rows[r].dot(pos);
  }
  c.validate();
  return c;
}

TraceHit trace(const SceneGeometry& g, const Vec3& origin, const Vec3& dir_world) {
  TraceHit out;
  double best_t = 1e30;
  int hit_sphere = -1;
  for (size_t i = 0; i < g.spheres.size(); ++i) {
    const Sphere& s = g.spheres[i];
    Vec3 oc = origin - s.center;
    double a = dir_world.dot(dir_world);
    double b = 2.0 * dir_world.dot(oc);
    double c = oc.dot(oc) - s.radius * s.radius;
    double disc = b * b - 4 * a * c;
    if (disc < 0) continue;
    double t = (-b - std::sqrt(disc)) / (2 * a);
    if (t > 1e-6 && t < best_t) {
      best_t = t;
      hit_sphere = static_cast<int>(i);
    }
  }
  double denom = dir_world.dot(g.plane_normal);
  if (std::fabs(denom) > 1e-12) {
    double t = (g.plane_point - origin).dot(g.plane_normal) / denom;
    if (t > 1e-6 && t < best_t) {
      best_t = t;
      hit_sphere = -2;
    }
  }
  if (hit_sphere == -1) return out;
  out.hit = true;
  out.depth = best_t;  // ray parameter equals camera depth for z=1 ray dirs
  out.point = origin + dir_world * best_t;
  Vec3 normal, albedo;
  if (hit_sphere >= 0) {
    const Sphere& s = g.spheres[static_cast<size_t>(hit_sphere)];
    normal = (out.point - s.center) * (1.0 / s.radius);
    albedo = s.tex.eval(out.point);
  } else {
    normal = g.plane_normal;
    if (normal.dot(dir_world) > 0) normal = normal * -1.0;
    albedo = g.plane_tex.eval(out.point);
  }
  double shade = 0.6 + 0.4 * std::max(0.0, normal.dot(g.light * -1.0));
  out.color = albedo * shade;
  return out;
}

Vec3 ray_dir_world(const Camera& cam, double px, double py) {
  Vec3 dir_cam = {(px - cam.cx) / cam.fx, (py - cam.cy) / cam.fy, 1.0};
  return cam.rotation().transposed().mul(dir_cam);
}

View render_view(const SceneGeometry& g, const Camera& cam, Tensor* depth_out) {
  int64_t h = cam.height, w = cam.width;
  View v;
  v.cam = cam;
  v.image = Tensor::zeros({3, h, w});
  if (depth_out) *depth_out = Tensor::zeros({h, w});
  double* img = v.image.data().data();
  Vec3 origin = cam.center();
  for (int64_t y = 0; y < h; ++y) {
    for (int64_t x = 0; x < w; ++x) {
      TraceHit hit = trace(g, origin, ray_dir_world(cam, static_cast<double>(x),
                                                    static_cast<double>(y)));
      Vec3 c = hit.hit ? hit.color : Vec3{0.05, 0.06, 0.08};
      img[0 * h * w + y * w + x] = c.x;
      img[1 * h * w + y * w + x] = c.y;
      img[2 * h * w + y * w + x] = c.z;
      if (depth_out) depth_out->data()[y * w + x] = hit.depth;
    }
  }
  return v;
}

}  // namespace

GeneratedScene generate_scene(const SceneGenConfig& cfg, uint64_t seed) {
  GS_CHECK(cfg.n_inputs >= 1 && cfg.n_targets >= 1, "scene gen: need inputs and targets");
  GS_CHECK(cfg.width >= 16 && cfg.height >= 16, "scene gen: resolution too small");
  GS_CHECK(cfg.d_near > 0 && cfg.d_far > cfg.d_near, "scene gen: bad depth range");
  Rng rng(seed ^ 0x5ce9e5ull);

  auto geom = std::make_shared<SceneGeometry>();
  double span = cfg.d_far - cfg.d_near;
  double tan_half = std::tan(cfg.fov_deg * M_PI / 360.0);
  for (int64_t i = 0; i < cfg.n_objects; ++i) {
    Sphere s;
    double depth = cfg.d_near + span * rng.uniform(0.3, 0.66);
    double lateral = 0.42 * depth * tan_half;
    s.center = {rng.uniform(-lateral, lateral), rng.uniform(-0.6 * lateral, 0.6 * lateral),
                depth};
    s.radius = rng.uniform(0.4, 0.85) * depth / 5.0;
    s.tex = random_texture(rng, 1.2, 3.0);
    geom->spheres.push_back(s);
  }
  geom->plane_point = {0, 0, cfg.d_near + 0.78 * span};
  Vec3 tilt = {rng.uniform(-0.03, 0.03), rng.uniform(-0.03, 0.03), -1.0};
  geom->plane_normal = tilt.normalized();
  geom->plane_tex = random_texture(rng, 0.8, 2.0);
  geom->light = Vec3{0.4, -0.7, -0.55}.normalized();

  double fx = (static_cast<double>(cfg.width) / 2.0) / tan_half;
  Vec3 target = {0, 0, cfg.d_near + 0.5 * span};
  double arc = 0.55;
  auto input_pos = [&](double u) {
    return Vec3{arc * u, 0.1 * arc * (u * u - 0.5), 0.0};
  };

  GeneratedScene out;
  out.geometry = geom;
  out.sample.name = "scene";
  for (int64_t i = 0; i < cfg.n_inputs; ++i) {
    double u = cfg.n_inputs == 1
                   ? 0.0
                   : -1.0 + 2.0 * static_cast<double>(i) / static_cast<double>(cfg.n_inputs - 1);
    Camera cam = look_at_camera(input_pos(u), target, fx, cfg.width, cfg.height);
    Tensor depth;
    out.sample.inputs.push_back(render_view(*geom, cam, &depth));
    out.input_depths.push_back(depth);
  }
  for (int64_t i = 0; i < cfg.n_targets; ++i) {
    double u = rng.uniform(-0.9, 0.9);
    Vec3 pos = input_pos(u);
    pos.y += rng.uniform(-0.08, 0.08);
    Camera cam = look_at_camera(pos, target, fx, cfg.width, cfg.height);
    out.sample.targets.push_back(render_view(*geom, cam, nullptr));
  }

  // anchors: marked points on the backdrop inside the shared frustum
  for (int i = 0; i < 4; ++i) {
    double zx = rng.uniform(-0.28, 0.28) * geom->plane_point.z * tan_half;
    double zy = rng.uniform(-0.22, 0.22) * geom->plane_point.z * tan_half;
    // push the lateral point onto the tilted plane along z
    const Vec3& n = geom->plane_normal;
    const Vec3& p0 = geom->plane_point;
    double z = p0.z - (n.x * (zx - p0.x) + n.y * (zy - p0.y)) / n.z;
    out.anchors.push_back({zx, zy, z});
  }
  return out;
}

TraceHit trace_scene_ray(const GeneratedScene& scene, const Camera& cam, double px, double py) {
  GS_CHECK(scene.geometry, "trace_scene_ray: scene has no geometry");
  return trace(*scene.geometry, cam.center(), ray_dir_world(cam, px, py));
}

}  // namespace gs
