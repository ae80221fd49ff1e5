#include "manifold_calib/se3.hpp"

#include <cmath>
#include <string>

#include "manifold_calib/error.hpp"

namespace manifold_calib {

namespace {

constexpr double kGimbalEps = 1e-8;

}  // namespace

Vec6 Pose6::vec() const {
  Vec6 v;
  v << x, y, z, alpha, beta, gamma;
  return v;
}

Pose6 Pose6::from_vec(const Vec6& v) { return {v[0], v[1], v[2], v[3], v[4], v[5]}; }

HomTransform::HomTransform(const Mat4& m) : m_(m) { m_.row(3) << 0.0, 0.0, 0.0, 1.0; }

HomTransform::HomTransform(const Mat3& rotation, const Vec3& translation) : m_(Mat4::Identity()) {
  m_.topLeftCorner<3, 3>() = rotation;
  m_.topRightCorner<3, 1>() = translation;
}

HomTransform HomTransform::operator*(const HomTransform& rhs) const {
  return HomTransform(Mat4(m_ * rhs.m_));
}

Mat3 rotation_zyx_deg(double alpha, double beta, double gamma) {
  const double ca = std::cos(alpha * kDegToRad), sa = std::sin(alpha * kDegToRad);
  const double cb = std::cos(beta * kDegToRad), sb = std::sin(beta * kDegToRad);
  const double cg = std::cos(gamma * kDegToRad), sg = std::sin(gamma * kDegToRad);
  Mat3 r;
  r << cg * cb, cg * sb * sa - sg * ca, cg * sb * ca + sg * sa,
       sg * cb, sg * sb * sa + cg * ca, sg * sb * ca - cg * sa,
       -sb,     cb * sa,                cb * ca;
  return r;
}

HomTransform pose_to_matrix(const Pose6& p) {
  return HomTransform(rotation_zyx_deg(p.alpha, p.beta, p.gamma), Vec3(p.x, p.y, p.z));
}

Pose6 matrix_to_pose(const HomTransform& t) {
  const Mat4& m = t.matrix();
  const double cos_beta = std::hypot(m(0, 0), m(1, 0));
  if (cos_beta < kGimbalEps) {
    throw Error(ErrorCode::kGimbalLock,
                "pitch at +-90 deg, Euler extraction is singular (cos(beta)=" +
                    std::to_string(cos_beta) + ")");
  }
  Pose6 p;
  p.x = m(0, 3);
  p.y = m(1, 3);
  p.z = m(2, 3);
  p.alpha = std::atan2(m(2, 1), m(2, 2)) * kRadToDeg;
  p.beta = std::atan2(-m(2, 0), cos_beta) * kRadToDeg;
  p.gamma = std::atan2(m(1, 0), m(0, 0)) * kRadToDeg;
  return p;
}

HomTransform compose(const HomTransform& a, const HomTransform& b) { return a * b; }

HomTransform inverse(const HomTransform& t) {
  const Mat3 rt = t.rotation().transpose();
  return HomTransform(rt, -rt * t.translation());
}

double squared_distance(const Pose6& a, const Pose6& b) {
  const double dx = a.x - b.x, dy = a.y - b.y, dz = a.z - b.z;
  const double da = a.alpha - b.alpha, db = a.beta - b.beta, dg = a.gamma - b.gamma;
  return dx * dx + dy * dy + dz * dz + da * da + db * db + dg * dg;
}

double dist_l2_r6(const Pose6& a, const Pose6& b) { return std::sqrt(squared_distance(a, b)); }

DistancePair dist_l1_split(const Pose6& a, const Pose6& b) {
  return {std::abs(a.x - b.x) + std::abs(a.y - b.y) + std::abs(a.z - b.z),
          std::abs(a.alpha - b.alpha) + std::abs(a.beta - b.beta) + std::abs(a.gamma - b.gamma)};
}

Mat6X pose_jacobian(const HomTransform& t, std::span<const Mat4> d_transforms) {
  const Mat4& m = t.matrix();
  const double r00 = m(0, 0), r10 = m(1, 0), r20 = m(2, 0), r21 = m(2, 1), r22 = m(2, 2);
  const double c2 = r00 * r00 + r10 * r10;
  const double c = std::sqrt(c2);
  if (c < kGimbalEps) {
    throw Error(ErrorCode::kGimbalLock, "pose Jacobian requested at gimbal lock");
  }
  const double ar2 = r21 * r21 + r22 * r22;

  Mat6X jac(6, static_cast<Eigen::Index>(d_transforms.size()));
  for (std::size_t k = 0; k < d_transforms.size(); ++k) {
    const Mat4& d = d_transforms[k];
    const auto col = static_cast<Eigen::Index>(k);
    jac(0, col) = d(0, 3);
    jac(1, col) = d(1, 3);
    jac(2, col) = d(2, 3);
    jac(3, col) = (r22 * d(2, 1) - r21 * d(2, 2)) / ar2 * kRadToDeg;
    const double dc = (r00 * d(0, 0) + r10 * d(1, 0)) / c;
    jac(4, col) = (-c * d(2, 0) + r20 * dc) / (r20 * r20 + c2) * kRadToDeg;
    jac(5, col) = (r00 * d(1, 0) - r10 * d(0, 0)) / c2 * kRadToDeg;
  }
  return jac;
}

Vec3 rotation_error_deg(const Mat3& target, const Mat3& current) {
  const Eigen::AngleAxisd aa(Mat3(target * current.transpose()));
  return aa.axis() * (aa.angle() * kRadToDeg);
}

}  // namespace manifold_calib
