#include "gs/geometry.hpp"

#include <cmath>

namespace gs {

namespace {

Vec4 normalized_quat(const Vec4& q) {
  double n = q.norm();
  GS_CHECK(n > 1e-12, "quat_to_rot: near-zero quaternion");
  return {q.w / n, q.x / n, q.y / n, q.z / n};
}

Mat3 rot_from_unit(const Vec4& u) {
  double w = u.w, x = u.x, y = u.y, z = u.z;
  return {{1 - 2 * (y * y + z * z), 2 * (x * y - w * z), 2 * (x * z + w * y),
           2 * (x * y + w * z), 1 - 2 * (x * x + z * z), 2 * (y * z - w * x),
           2 * (x * z - w * y), 2 * (y * z + w * x), 1 - 2 * (x * x + y * y)}};
}

// dL/d(unit quat) given dL/dR at the unit quaternion u.
Vec4 rot_backward_unit(const Vec4& u, const Mat3& g) {
  double w = u.w, x = u.x, y = u.y, z = u.z;
  Vec4 gu;
  gu.w = 2 * (-z * g.at(0, 1) + y * g.at(0, 2) + z * g.at(1, 0) - x * g.at(1, 2) -
              y * g.at(2, 0) + x * g.at(2, 1));
  gu.x = 2 * (y * g.at(0, 1) + z * g.at(0, 2) + y * g.at(1, 0) - 2 * x * g.at(1, 1) -
              w * g.at(1, 2) + z * g.at(2, 0) + w * g.at(2, 1) - 2 * x * g.at(2, 2));
  gu.y = 2 * (-2 * y * g.at(0, 0) + x * g.at(0, 1) + w * g.at(0, 2) + x * g.at(1, 0) +
              z * g.at(1, 2) - w * g.at(2, 0) + z * g.at(2, 1) - 2 * y * g.at(2, 2));
  gu.z = 2 * (-2 * z * g.at(0, 0) - w * g.at(0, 1) + x * g.at(0, 2) + w * g.at(1, 0) -
              2 * z * g.at(1, 1) + y * g.at(1, 2) + x * g.at(2, 0) + y * g.at(2, 1));
  return gu;
}

}  // namespace

Mat3 quat_to_rot(const Vec4& q) { return rot_from_unit(normalized_quat(q)); }

void quat_to_rot_backward(const Vec4& q, const Mat3& g_rot, Vec4& g_q) {
  double n = q.norm();
  GS_CHECK(n > 1e-12, "quat_to_rot_backward: near-zero quaternion");
  Vec4 u = {q.w / n, q.x / n, q.y / n, q.z / n};
  Vec4 gu = rot_backward_unit(u, g_rot);
  // project through the normalization: (I - u u^T) / n
  double d = u.dot(gu);
  g_q.w += (gu.w - u.w * d) / n;
  g_q.x += (gu.x - u.x * d) / n;
  g_q.y += (gu.y - u.y * d) / n;
  g_q.z += (gu.z - u.z * d) / n;
}

Mat3 covariance_from(const Vec3& s, const Vec4& q) {
  Mat3 R = quat_to_rot(q);
  // V = R diag(s); Sigma = V V^T
  Mat3 V = R;
  for (int r = 0; r < 3; ++r) {
    V.at(r, 0) *= s.x;
    V.at(r, 1) *= s.y;
    V.at(r, 2) *= s.z;
  }
  return V.mul(V.transposed());
}

void covariance_from_backward(const Vec3& s, const Vec4& q, const Mat3& g_sigma, Vec3& g_s,
                              Vec4& g_q) {
  Mat3 R = quat_to_rot(q);
  Mat3 V = R;
  for (int r = 0; r < 3; ++r) {
    V.at(r, 0) *= s.x;
    V.at(r, 1) *= s.y;
    V.at(r, 2) *= s.z;
  }
  // dL/dV = (G + G^T) V for Sigma = V V^T
  Mat3 sym;
  for (int i = 0; i < 9; ++i) sym.m[i] = g_sigma.m[i];
  for (int r = 0; r < 3; ++r)
    for (int c = 0; c < 3; ++c) sym.at(r, c) = g_sigma.at(r, c) + g_sigma.at(c, r);
  Mat3 gV = sym.mul(V);
  // V = R diag(s): dL/dR = gV diag(s), dL/ds_c = sum_r gV[r,c] R[r,c]
  Mat3 gR = gV;
  for (int r = 0; r < 3; ++r) {
    gR.at(r, 0) *= s.x;
    gR.at(r, 1) *= s.y;
    gR.at(r, 2) *= s.z;
  }
  g_s.x += gV.at(0, 0) * R.at(0, 0) + gV.at(1, 0) * R.at(1, 0) + gV.at(2, 0) * R.at(2, 0);
  g_s.y += gV.at(0, 1) * R.at(0, 1) + gV.at(1, 1) * R.at(1, 1) + gV.at(2, 1) * R.at(2, 1);
  g_s.z += gV.at(0, 2) * R.at(0, 2) + gV.at(1, 2) * R.at(1, 2) + gV.at(2, 2) * R.at(2, 2);
  quat_to_rot_backward(q, gR, g_q);
}

PointProjection project_point(const Vec3& mu, const Camera& cam, double z_eps) {
  Vec3 pc = cam.rotation().mul(mu) + cam.translation();
  PointProjection out;
  out.depth = pc.z;
  out.visible = pc.z > z_eps;
  if (out.visible) {
    out.pix = {cam.fx * pc.x / pc.z + cam.cx, cam.fy * pc.y / pc.z + cam.cy};
  } else {
    out.pix = {kProjectionSentinel, kProjectionSentinel};
  }
  return out;
}

void project_point_backward(const Vec3& mu, const Camera& cam, const Vec2& g_pix, double g_depth,
                            Vec3& g_mu) {
  Mat3 R = cam.rotation();
  Vec3 pc = R.mul(mu) + cam.translation();
  GS_CHECK(pc.z > 0, "project_point_backward: point behind camera");
  double iz = 1.0 / pc.z;
  Vec3 g_pc = {cam.fx * iz * g_pix.x, cam.fy * iz * g_pix.y,
               -cam.fx * pc.x * iz * iz * g_pix.x - cam.fy * pc.y * iz * iz * g_pix.y + g_depth};
  Vec3 add = R.transposed().mul(g_pc);
  g_mu = g_mu + add;
}

Vec3 unproject(const Vec2& pix, double depth, const Camera& cam) {
  Vec3 pc = {depth * (pix.x - cam.cx) / cam.fx, depth * (pix.y - cam.cy) / cam.fy, depth};
  Mat3 Rt = cam.rotation().transposed();
  return Rt.mul(pc - cam.translation());
}

Mat2 project_covariance(const Mat3& sigma, const Vec3& mu_cam, const Camera& cam,
                        double dilation) {
  GS_CHECK(mu_cam.z > 0, "project_covariance: point behind camera");
  double iz = 1.0 / mu_cam.z;
  // M = J W applied to the world covariance; sigma here is in world axes and
  // W is the camera rotation, so transport is (JW) sigma (JW)^T.
  Mat3 W = cam.rotation();
  double j00 = cam.fx * iz, j02 = -cam.fx * mu_cam.x * iz * iz;
  double j11 = cam.fy * iz, j12 = -cam.fy * mu_cam.y * iz * iz;
  double M[2][3];
  for (int c = 0; c < 3; ++c) {
    M[0][c] = j00 * W.at(0, c) + j02 * W.at(2, c);
    M[1][c] = j11 * W.at(1, c) + j12 * W.at(2, c);
  }
  double T[2][3];  // M sigma
  for (int r = 0; r < 2; ++r)
    for (int c = 0; c < 3; ++c)
      T[r][c] = M[r][0] * sigma.at(0, c) + M[r][1] * sigma.at(1, c) + M[r][2] * sigma.at(2, c);
  Mat2 out;
  for (int r = 0; r < 2; ++r)
    for (int c = 0; c < 2; ++c)
      out.m[r * 2 + c] = T[r][0] * M[c][0] + T[r][1] * M[c][1] + T[r][2] * M[c][2];
  out.m[0] += dilation;
  out.m[3] += dilation;
  return out;
}

void project_covariance_backward(const Mat3& sigma, const Vec3& mu_cam, const Camera& cam,
                                 const Mat2& g_out, Mat3& g_sigma, Vec3& g_mu_cam) {
  GS_CHECK(mu_cam.z > 0, "project_covariance_backward: point behind camera");
  double iz = 1.0 / mu_cam.z;
  Mat3 W = cam.rotation();
  double j00 = cam.fx * iz, j02 = -cam.fx * mu_cam.x * iz * iz;
  double j11 = cam.fy * iz, j12 = -cam.fy * mu_cam.y * iz * iz;
  double M[2][3];
  for (int c = 0; c < 3; ++c) {
    M[0][c] = j00 * W.at(0, c) + j02 * W.at(2, c);
    M[1][c] = j11 * W.at(1, c) + j12 * W.at(2, c);
  }
  // out = M sigma M^T + dilation I
  // gM = (G + G^T) M sigma ; gSigma = M^T G M
  double gsym[2][2] = {{g_out.m[0] + g_out.m[0], g_out.m[1] + g_out.m[2]},
                       {g_out.m[2] + g_out.m[1], g_out.m[3] + g_out.m[3]}};
  double MS[2][3];
  for (int r = 0; r < 2; ++r)
    for (int c = 0; c < 3; ++c)
      MS[r][c] = M[r][0] * sigma.at(0, c) + M[r][1] * sigma.at(1, c) + M[r][2] * sigma.at(2, c);
  double gM[2][3];
  for (int r = 0; r < 2; ++r)
    for (int c = 0; c < 3; ++c) gM[r][c] = gsym[r][0] * MS[0][c] + gsym[r][1] * MS[1][c];
  for (int r = 0; r < 3; ++r)
    for (int c = 0; c < 3; ++c) {
      double acc = 0;
      for (int i = 0; i < 2; ++i)
        for (int j = 0; j < 2; ++j) acc += M[i][r] * g_out.m[i * 2 + j] * M[j][c];
      g_sigma.at(r, c) += acc;
    }
  // gJ = gM W^T, with J parameterized by (j00, j02, j11, j12)
  double gJ[2][3];
  for (int r = 0; r < 2; ++r)
    for (int c = 0; c < 3; ++c)
      gJ[r][c] = gM[r][0] * W.at(c, 0) + gM[r][1] * W.at(c, 1) + gM[r][2] * W.at(c, 2);
  double g_j00 = gJ[0][0], g_j02 = gJ[0][2], g_j11 = gJ[1][1], g_j12 = gJ[1][2];
  // j00 = fx/z, j02 = -fx x/z^2, j11 = fy/z, j12 = -fy y/z^2
  g_mu_cam.x += -cam.fx * iz * iz * g_j02;
  g_mu_cam.y += -cam.fy * iz * iz * g_j12;
  g_mu_cam.z += -cam.fx * iz * iz * g_j00 - cam.fy * iz * iz * g_j11 +
                2.0 * cam.fx * mu_cam.x * iz * iz * iz * g_j02 +
                2.0 * cam.fy * mu_cam.y * iz * iz * iz * g_j12;
}

ProjectedPoints project_points(const Tensor& mu, const Camera& cam, double z_eps) {
  GS_CHECK(mu.ndim() == 2 && mu.dim(1) == 3, "project_points: mu must be [N,3]");
  int64_t N = mu.dim(0);
  bool rg = active_tape() && mu.requires_grad();
  ProjectedPoints out;
  out.pix = Tensor::zeros({N, 2}, rg);
  out.depth = Tensor::zeros({N, 1});
  out.vis = Tensor::zeros({N, 1});
  const double* pm = mu.data().data();
  double* pp = out.pix.data().data();
  double* pd = out.depth.data().data();
  double* pv = out.vis.data().data();
  Mat3 R = cam.rotation();
  Vec3 t = cam.translation();
  for (int64_t i = 0; i < N; ++i) {
    Vec3 m = {pm[i * 3], pm[i * 3 + 1], pm[i * 3 + 2]};
    Vec3 pc = R.mul(m) + t;
    pd[i] = pc.z;
    if (pc.z > z_eps) {
      pv[i] = 1.0;
      pp[i * 2 + 0] = cam.fx * pc.x / pc.z + cam.cx;
      pp[i * 2 + 1] = cam.fy * pc.y / pc.z + cam.cy;
    } else {
      pp[i * 2 + 0] = kProjectionSentinel;
      pp[i * 2 + 1] = kProjectionSentinel;
    }
  }
  if (rg) {
    active_tape()->record([mn = mu.node(), pn = out.pix.node(), vn = out.vis.node(), cam, N] {
      const double* pm = mn->data.data();
      const double* gp = pn->grad.data();
      const double* pv = vn->data.data();
      double* gm = mn->grad.data();
      Mat3 R = cam.rotation();
      Vec3 t = cam.translation();
      for (int64_t i = 0; i < N; ++i) {
        if (pv[i] == 0.0) continue;
        Vec3 m = {pm[i * 3], pm[i * 3 + 1], pm[i * 3 + 2]};
        Vec3 pc = R.mul(m) + t;
        double iz = 1.0 / pc.z;
        double gx = gp[i * 2 + 0], gy = gp[i * 2 + 1];
        Vec3 g_pc = {cam.fx * iz * gx, cam.fy * iz * gy,
                     -cam.fx * pc.x * iz * iz * gx - cam.fy * pc.y * iz * iz * gy};
        Vec3 add = R.transposed().mul(g_pc);
        gm[i * 3 + 0] += add.x;
        gm[i * 3 + 1] += add.y;
        gm[i * 3 + 2] += add.z;
      }
    });
  }
  return out;
}

}  // namespace gs
