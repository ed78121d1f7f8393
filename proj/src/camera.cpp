#include "gs/camera.hpp"

#include <cmath>

#include "gs/tensor.hpp"

namespace gs {

Mat3 Camera::rotation() const {
  return {{w2c[0], w2c[1], w2c[2], w2c[4], w2c[5], w2c[6], w2c[8], w2c[9], w2c[10]}};
}

Vec3 Camera::translation() const { return {w2c[3], w2c[7], w2c[11]}; }

Vec3 Camera::center() const {
  Vec3 t = translation();
  return rotation().transposed().mul(t) * -1.0;
}

void Camera::validate() const {
  GS_CHECK(fx > 0 && fy > 0, "camera: focal lengths must be positive");
  GS_CHECK(width >= 16 && height >= 16, "camera: image must be at least 16x16");
  GS_CHECK(w2c[12] == 0 && w2c[13] == 0 && w2c[14] == 0 && w2c[15] == 1,
           "camera: world_to_cam last row must be (0,0,0,1)");
  Mat3 R = rotation();
  Mat3 RtR = R.transposed().mul(R);
  Mat3 I = Mat3::identity();
  for (int i = 0; i < 9; ++i)
    GS_CHECK(std::fabs(RtR.m[i] - I.m[i]) < 1e-9, "camera: rotation is not orthonormal");
  GS_CHECK(std::fabs(R.det() - 1.0) < 1e-9, "camera: rotation must have det +1");
}

Camera Camera::downscaled(int64_t factor) const {
  GS_CHECK(factor >= 1 && width % factor == 0 && height % factor == 0,
           "camera: resolution not divisible by downscale factor");
  Camera c = *this;
  double f = static_cast<double>(factor);
  c.fx = fx / f;
  c.fy = fy / f;
  c.cx = (cx + 0.5) / f - 0.5;
  c.cy = (cy + 0.5) / f - 0.5;
  c.width = width / factor;
  c.height = height / factor;
  return c;
}

}  // namespace gs
