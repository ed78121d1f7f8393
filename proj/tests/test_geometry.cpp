#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <Eigen/Dense>
#include <algorithm>
#include <cmath>

#include "doctest.h"
#include "gs/geometry.hpp"
#include "gs/rng.hpp"
#include "testutil.hpp"

using namespace gs;

namespace {

constexpr double kTol = 1e-6;

Camera make_camera() {
  Camera c;
  c.fx = 40.0;
  c.fy = 42.0;
  c.cx = 31.5;
  c.cy = 31.5;
  c.width = 64;
  c.height = 64;
  // mild rotation about y plus a translation
  double a = 0.3;
  double R[9] = {std::cos(a), 0, std::sin(a), 0, 1, 0, -std::sin(a), 0, std::cos(a)};
  double t[3] = {0.2, -0.1, 0.5};
  for (int r = 0; r < 3; ++r) {
    for (int c2 = 0; c2 < 3; ++c2) c.w2c[r * 4 + c2] = R[r * 3 + c2];
    c.w2c[r * 4 + 3] = t[r];
  }
  c.validate();
  return c;
}

Vec4 rand_quat(Rng& rng) {
  return {rng.normal(), rng.normal(), rng.normal(), rng.normal()};
}

double mat3_dot(const Mat3& a, const Mat3& b) {
  double acc = 0;
  for (int i = 0; i < 9; ++i) acc += a.m[i] * b.m[i];
  return acc;
}

}  // namespace

TEST_CASE("identity quaternion gives identity rotation") {
  Mat3 R = quat_to_rot({1, 0, 0, 0});
  Mat3 I = Mat3::identity();
  for (int i = 0; i < 9; ++i) CHECK(R.m[i] == doctest::Approx(I.m[i]).epsilon(1e-14));
}

TEST_CASE("quarter turn about z maps x to y") {
  double c = std::cos(M_PI / 4), s = std::sin(M_PI / 4);
  Mat3 R = quat_to_rot({c, 0, 0, s});
  Vec3 v = R.mul(Vec3{1, 0, 0});
  CHECK(v.x == doctest::Approx(0.0).epsilon(1e-12));
  CHECK(v.y == doctest::Approx(1.0).epsilon(1e-12));
  CHECK(v.z == doctest::Approx(0.0).epsilon(1e-12));
}

TEST_CASE("rotation is invariant to quaternion scaling") {
  Rng rng(40);
  for (int i = 0; i < 20; ++i) {
    Vec4 q = rand_quat(rng);
    Mat3 a = quat_to_rot(q);
    Mat3 b = quat_to_rot({3.7 * q.w, 3.7 * q.x, 3.7 * q.y, 3.7 * q.z});
    for (int k = 0; k < 9; ++k) CHECK(a.m[k] == doctest::Approx(b.m[k]).epsilon(1e-12));
  }
  CHECK_THROWS(quat_to_rot({0, 0, 0, 0}));
}

TEST_CASE("random quaternions give orthonormal det(+1) rotations") {
  Rng rng(41);
  for (int i = 0; i < 200; ++i) {
    Mat3 R = quat_to_rot(rand_quat(rng));
    Mat3 RtR = R.transposed().mul(R);
    Mat3 I = Mat3::identity();
    for (int k = 0; k < 9; ++k) CHECK(std::fabs(RtR.m[k] - I.m[k]) < 1e-12);
    CHECK(R.det() == doctest::Approx(1.0).epsilon(1e-12));
  }
}

TEST_CASE("covariance eigenvalues are the squared scales") {
  Rng rng(42);
  for (int i = 0; i < 50; ++i) {
    Vec3 s = {rng.uniform(0.5, 15.0), rng.uniform(0.5, 15.0), rng.uniform(0.5, 15.0)};
    Mat3 sig = covariance_from(s, rand_quat(rng));
    // symmetric
    CHECK(sig.at(0, 1) == doctest::Approx(sig.at(1, 0)).epsilon(1e-12));
    CHECK(sig.at(0, 2) == doctest::Approx(sig.at(2, 0)).epsilon(1e-12));
    CHECK(sig.at(1, 2) == doctest::Approx(sig.at(2, 1)).epsilon(1e-12));
    Eigen::Matrix3d m;
    for (int r = 0; r < 3; ++r)
      for (int c = 0; c < 3; ++c) m(r, c) = sig.at(r, c);
    Eigen::SelfAdjointEigenSolver<Eigen::Matrix3d> es(m);
    std::vector<double> ev = {es.eigenvalues()[0], es.eigenvalues()[1], es.eigenvalues()[2]};
    std::vector<double> want = {s.x * s.x, s.y * s.y, s.z * s.z};
    std::sort(want.begin(), want.end());
    for (int k = 0; k < 3; ++k) {
      CHECK(ev[k] > 0.0);
      CHECK(ev[k] == doctest::Approx(want[k]).epsilon(1e-9));
    }
  }
}

TEST_CASE("quat_to_rot backward matches finite differences") {
  Rng rng(43);
  for (int trial = 0; trial < 10; ++trial) {
    Vec4 q = rand_quat(rng);
    Mat3 W;
    for (int i = 0; i < 9; ++i) W.m[i] = rng.uniform(-1, 1);
    Vec4 g = {0, 0, 0, 0};
    quat_to_rot_backward(q, W, g);
    double* qc = &q.w;
    double* gc = &g.w;
    for (int k = 0; k < 4; ++k) {
      double h = 1e-6, saved = qc[k];
      qc[k] = saved + h;
      double up = mat3_dot(W, quat_to_rot(q));
      qc[k] = saved - h;
      double dn = mat3_dot(W, quat_to_rot(q));
      qc[k] = saved;
      double fd = (up - dn) / (2 * h);
      CHECK(gc[k] == doctest::Approx(fd).epsilon(kTol));
    }
  }
}

TEST_CASE("covariance backward matches finite differences") {
  Rng rng(44);
  for (int trial = 0; trial < 10; ++trial) {
    Vec3 s = {rng.uniform(0.5, 5.0), rng.uniform(0.5, 5.0), rng.uniform(0.5, 5.0)};
    Vec4 q = rand_quat(rng);
    Mat3 W;
    for (int i = 0; i < 9; ++i) W.m[i] = rng.uniform(-1, 1);
    Vec3 gs_ = {0, 0, 0};
    Vec4 gq = {0, 0, 0, 0};
    covariance_from_backward(s, q, W, gs_, gq);
    double h = 1e-6;
    double* sc = &s.x;
    double* gsc = &gs_.x;
    for (int k = 0; k < 3; ++k) {
      double saved = sc[k];
      sc[k] = saved + h;
      double up = mat3_dot(W, covariance_from(s, q));
      sc[k] = saved - h;
      double dn = mat3_dot(W, covariance_from(s, q));
      sc[k] = saved;
      CHECK(gsc[k] == doctest::Approx((up - dn) / (2 * h)).epsilon(kTol));
    }
    double* qc = &q.w;
    double* gqc = &gq.w;
    for (int k = 0; k < 4; ++k) {
      double saved = qc[k];
      qc[k] = saved + h;
      double up = mat3_dot(W, covariance_from(s, q));
      qc[k] = saved - h;
      double dn = mat3_dot(W, covariance_from(s, q));
      qc[k] = saved;
      CHECK(gqc[k] == doctest::Approx((up - dn) / (2 * h)).epsilon(kTol));
    }
  }
}

TEST_CASE("project and unproject round trip") {
  Camera cam = make_camera();
  Rng rng(45);
  for (int i = 0; i < 100; ++i) {
    Vec3 mu = {rng.uniform(-3, 3), rng.uniform(-3, 3), rng.uniform(1.0, 9.0)};
    // mu is in front of this camera by construction of the depth range?
    PointProjection p = project_point(mu, cam);
    if (!p.visible) continue;
    Vec3 back = unproject(p.pix, p.depth, cam);
    CHECK(back.x == doctest::Approx(mu.x).epsilon(1e-10));
    CHECK(back.y == doctest::Approx(mu.y).epsilon(1e-10));
    CHECK(back.z == doctest::Approx(mu.z).epsilon(1e-10));
  }
  // a point behind the camera is invisible and gets sentinel pixels
  Vec3 behind = cam.center() - cam.rotation().transposed().mul(Vec3{0, 0, 2.0});
  PointProjection p = project_point(behind, cam);
  CHECK_FALSE(p.visible);
  CHECK(p.pix.x == kProjectionSentinel);
}

TEST_CASE("project_point backward matches finite differences") {
  Camera cam = make_camera();
  Rng rng(46);
  for (int trial = 0; trial < 10; ++trial) {
    Vec3 mu = {rng.uniform(-2, 2), rng.uniform(-2, 2), rng.uniform(2.0, 8.0)};
    if (!project_point(mu, cam).visible) continue;
    Vec2 w = {rng.uniform(-1, 1), rng.uniform(-1, 1)};
    double wd = rng.uniform(-1, 1);
    Vec3 g = {0, 0, 0};
    project_point_backward(mu, cam, w, wd, g);
    auto value = [&](const Vec3& m) {
      PointProjection p = project_point(m, cam);
      return w.x * p.pix.x + w.y * p.pix.y + wd * p.depth;
    };
    double h = 1e-6;
    double* mc = &mu.x;
    double* gc = &g.x;
    for (int k = 0; k < 3; ++k) {
      double saved = mc[k];
      mc[k] = saved + h;
      double up = value(mu);
      mc[k] = saved - h;
      double dn = value(mu);
      mc[k] = saved;
      CHECK(gc[k] == doctest::Approx((up - dn) / (2 * h)).epsilon(kTol));
    }
  }
}

TEST_CASE("screen covariance: closed form at the optical axis") {
  Camera cam;
  cam.fx = 50;
  cam.fy = 60;
  cam.cx = 31.5;
  cam.cy = 31.5;
  cam.width = 64;
  cam.height = 64;
  cam.validate();
  double var = 0.7;
  Mat3 sigma = Mat3::identity();
  for (int i = 0; i < 9; ++i) sigma.m[i] *= var;
  sigma.at(1, 1) = var;
  Vec3 mu_cam = {0, 0, 4.0};
  Mat2 out = project_covariance(sigma, mu_cam, cam, 0.3);
  CHECK(out.m[0] == doctest::Approx(var * 50 * 50 / 16.0 + 0.3).epsilon(1e-12));
  CHECK(out.m[3] == doctest::Approx(var * 60 * 60 / 16.0 + 0.3).epsilon(1e-12));
  CHECK(out.m[1] == doctest::Approx(0.0).epsilon(1e-12));
}

TEST_CASE("screen covariance stays positive definite with dilation") {
  Camera cam = make_camera();
  Rng rng(47);
  for (int i = 0; i < 100; ++i) {
    Vec3 s = {rng.uniform(0.5, 15.0), rng.uniform(0.5, 15.0), rng.uniform(0.5, 15.0)};
    Mat3 sigma = covariance_from(s, rand_quat(rng));
    Vec3 mu_cam = {rng.uniform(-2, 2), rng.uniform(-2, 2), rng.uniform(1.0, 9.0)};
    Mat2 out = project_covariance(sigma, mu_cam, cam, 0.3);
    double tr = out.m[0] + out.m[3];
    double det = out.det();
    double lam_min = tr / 2 - std::sqrt(std::max(0.0, tr * tr / 4 - det));
    CHECK(lam_min >= 0.3 - 1e-9);
  }
}

TEST_CASE("project_covariance backward matches finite differences") {
  Camera cam = make_camera();
  Rng rng(48);
  for (int trial = 0; trial < 10; ++trial) {
    Vec3 s = {rng.uniform(0.5, 4.0), rng.uniform(0.5, 4.0), rng.uniform(0.5, 4.0)};
    Vec4 q = rand_quat(rng);
    Mat3 sigma = covariance_from(s, q);
    Vec3 mu_cam = {rng.uniform(-2, 2), rng.uniform(-2, 2), rng.uniform(2.0, 8.0)};
    Mat2 W = {{rng.uniform(-1, 1), rng.uniform(-1, 1), rng.uniform(-1, 1), rng.uniform(-1, 1)}};
    Mat3 g_sigma;
    Vec3 g_mu = {0, 0, 0};
    project_covariance_backward(sigma, mu_cam, cam, W, g_sigma, g_mu);
    auto value = [&] {
      Mat2 o = project_covariance(sigma, mu_cam, cam, 0.3);
      return W.m[0] * o.m[0] + W.m[1] * o.m[1] + W.m[2] * o.m[2] + W.m[3] * o.m[3];
    };
    double h = 1e-6;
    for (int k = 0; k < 9; ++k) {
      double saved = sigma.m[k];
      sigma.m[k] = saved + h;
      double up = value();
      sigma.m[k] = saved - h;
      double dn = value();
      sigma.m[k] = saved;
      CHECK(g_sigma.m[k] == doctest::Approx((up - dn) / (2 * h)).epsilon(kTol));
    }
    double* mc = &g_mu.x;
    double* vc = &mu_cam.x;
    for (int k = 0; k < 3; ++k) {
      double saved = vc[k];
      vc[k] = saved + h;
      double up = value();
      vc[k] = saved - h;
      double dn = value();
      vc[k] = saved;
      CHECK(mc[k] == doctest::Approx((up - dn) / (2 * h)).epsilon(kTol));
    }
  }
}

TEST_CASE("project_points op: values, visibility, gradients") {
  Camera cam = make_camera();
  Rng rng(49);
  std::vector<double> vals;
  for (int i = 0; i < 8; ++i) {
    Vec3 w = unproject({rng.uniform(5.0, 58.0), rng.uniform(5.0, 58.0)}, rng.uniform(2.0, 8.0),
                       cam);
    vals.insert(vals.end(), {w.x, w.y, w.z});
  }
  Tensor mu = Tensor::from_data({8, 3}, vals, true);
  ProjectedPoints pp = project_points(mu, cam);
  for (int i = 0; i < 8; ++i) {
    CHECK(pp.vis.data()[i] == 1.0);
    PointProjection ref =
        project_point({vals[i * 3], vals[i * 3 + 1], vals[i * 3 + 2]}, cam);
    CHECK(pp.pix.at(i, 0) == doctest::Approx(ref.pix.x).epsilon(1e-12));
    CHECK(pp.pix.at(i, 1) == doctest::Approx(ref.pix.y).epsilon(1e-12));
    CHECK(pp.depth.data()[i] == doctest::Approx(ref.depth).epsilon(1e-12));
  }
  CHECK(gstest::gradcheck({mu}, [&] {
          return gstest::project_to_scalar(project_points(mu, cam).pix, 7);
        }) < 1e-5);

  // a behind-the-camera row keeps zero gradient and sentinel pixels
  Vec3 behind = cam.center() - cam.rotation().transposed().mul(Vec3{0, 0, 2.0});
  Tensor mu2 = Tensor::from_data({1, 3}, {behind.x, behind.y, behind.z}, true);
  Tape tape;
  {
    TapeScope scope(tape);
    ProjectedPoints p2 = project_points(mu2, cam);
    CHECK(p2.vis.data()[0] == 0.0);
    CHECK(p2.pix.data()[0] == kProjectionSentinel);
    tape.backward(gs::sum(p2.pix));
  }
  CHECK(mu2.grad()[0] == 0.0);
  CHECK(mu2.grad()[1] == 0.0);
  CHECK(mu2.grad()[2] == 0.0);
}

TEST_CASE("camera validation rejects bad inputs") {
  Camera cam = make_camera();
  Camera bad = cam;
  bad.w2c[0] = 2.0;  // not orthonormal
  CHECK_THROWS(bad.validate());
  bad = cam;
  bad.fx = -1.0;
  CHECK_THROWS(bad.validate());
  bad = cam;
  bad.w2c[15] = 2.0;
  CHECK_THROWS(bad.validate());
  // reflection: det -1
  bad = cam;
  for (int r = 0; r < 3; ++r) bad.w2c[r * 4 + 0] = -bad.w2c[r * 4 + 0];
  CHECK_THROWS(bad.validate());
}

TEST_CASE("downscaled camera keeps pixel centers aligned") {
  Camera cam = make_camera();
  Camera half = cam.downscaled(4);
  CHECK(half.width == 16);
  Rng rng(50);
  for (int i = 0; i < 20; ++i) {
    Vec3 w = unproject({rng.uniform(2.0, 61.0), rng.uniform(2.0, 61.0)}, rng.uniform(2.0, 8.0),
                       cam);
    PointProjection full = project_point(w, cam);
    PointProjection down = project_point(w, half);
    CHECK(down.pix.x == doctest::Approx((full.pix.x + 0.5) / 4.0 - 0.5).epsilon(1e-10));
    CHECK(down.pix.y == doctest::Approx((full.pix.y + 0.5) / 4.0 - 0.5).epsilon(1e-10));
  }
}
