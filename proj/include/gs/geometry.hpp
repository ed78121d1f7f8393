#pragma once

#include "gs/camera.hpp"
#include "gs/tensor.hpp"
#include "gs/vecmath.hpp"

namespace gs {

// Rotation from a possibly unnormalized quaternion (w,x,y,z); the quaternion
// is renormalized internally so R(q) = R(cq) for any c != 0. Throws on a
// near-zero quaternion.
Mat3 quat_to_rot(const Vec4& q);
// Accumulates dL/dq given dL/dR, differentiating through the normalization.
void quat_to_rot_backward(const Vec4& q, const Mat3& g_rot, Vec4& g_q);

// Sigma = R diag(s)^2 R^T, symmetric positive semidefinite with eigenvalues
// s_i^2.
Mat3 covariance_from(const Vec3& s, const Vec4& q);
void covariance_from_backward(const Vec3& s, const Vec4& q, const Mat3& g_sigma, Vec3& g_s,
                              Vec4& g_q);

struct PointProjection {
  Vec2 pix;
  double depth = 0;
  bool visible = false;
};

// Pinhole projection of a world point; visible means depth > z_eps.
PointProjection project_point(const Vec3& mu, const Camera& cam, double z_eps = 1e-4);
// dL/dmu from dL/dpix (and optionally dL/ddepth); only valid for visible
// projections.
void project_point_backward(const Vec3& mu, const Camera& cam, const Vec2& g_pix, double g_depth,
                            Vec3& g_mu);

// Exact inverse of project_point for visible points.
Vec3 unproject(const Vec2& pix, double depth, const Camera& cam);

// Perspective transport of a world covariance to a 2x2 screen covariance:
// first-order (Jacobian) propagation through the rigid transform and
// projection, plus `dilation` added to the diagonal so every splat covers at
// least a pixel-ish footprint. mu_cam is the point in camera coordinates.
Mat2 project_covariance(const Mat3& sigma, const Vec3& mu_cam, const Camera& cam,
                        double dilation = 0.3);
void project_covariance_backward(const Mat3& sigma, const Vec3& mu_cam, const Camera& cam,
                                 const Mat2& g_out, Mat3& g_sigma, Vec3& g_mu_cam);

// Tape op: mu [N,3] -> pixel coordinates [N,2] (differentiable), plus
// constant visibility [N,1] in {0,1} and constant depth [N,1]. Rows behind
// the camera get sentinel pixels far outside any image and zero gradient.
struct ProjectedPoints {
  Tensor pix;
  Tensor depth;
  Tensor vis;
};
ProjectedPoints project_points(const Tensor& mu, const Camera& cam, double z_eps = 1e-4);

constexpr double kProjectionSentinel = -1e9;

}  // namespace gs
