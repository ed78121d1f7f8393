#pragma once

#include <string>

#include "gs/gaussians.hpp"

namespace gs {

// Binary little-endian PLY in the layout common splat viewers expect:
// x y z, nx ny nz (zeros), f_dc_0..2, f_rest_* (band-1, channel-major,
// omitted for degree 0), opacity (pre-sigmoid), scale_0..2 (log), rot_0..3
// (w,x,y,z). All properties are f32.
void export_ply(const std::string& path, const GaussianSet& g);

// Inverse of export_ply. Scales are clamped back into [0.5, 15] and
// quaternions renormalized to absorb f32 rounding, so the result always
// passes validate(). Rejects any other property layout.
GaussianSet import_ply(const std::string& path);

}  // namespace gs
