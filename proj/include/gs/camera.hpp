#pragma once

#include <cstdint>

#include "gs/vecmath.hpp"

namespace gs {

// Pinhole camera with a rigid world-to-camera transform. Pixel centers sit at
// integer coordinates: pixel (row i, col j) covers [j-0.5, j+0.5] x
// [i-0.5, i+0.5] and projects from (x, y) = (j, i).
struct Camera {
  double fx = 0, fy = 0, cx = 0, cy = 0;
  int64_t width = 0, height = 0;
  double w2c[16] = {1, 0, 0, 0, 0, 1, 0, 0, 0, 0, 1, 0, 0, 0, 0, 1};  // row-major 4x4

  Mat3 rotation() const;
  Vec3 translation() const;
  Vec3 center() const;  // camera origin in world space, -R^T t

  // Throws unless the rotation is orthonormal with det +1 (1e-9), the last
  // row is (0,0,0,1), fx and fy are positive, and the image is at least 16px.
  void validate() const;

  // Same pose and optics at 1/factor resolution, keeping pixel centers
  // aligned: full-res pixel x maps to (x + 0.5)/factor - 0.5.
  Camera downscaled(int64_t factor) const;
};

}  // namespace gs
