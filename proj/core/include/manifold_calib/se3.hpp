#pragma once

// Pose math for the contact-manifold toolkit.
//
// Conventions used everywhere (manifold data, model I/O, calibration loss):
//   * translations in millimeters, angles in degrees;
//   * Euler angles are intrinsic Z-Y-X: R = Rz(gamma) * Ry(beta) * Rx(alpha);
//   * pitch beta must stay away from +-90 deg (gimbal lock is a hard error).

#include <Eigen/Dense>

#include <span>

namespace manifold_calib {

using Vec3 = Eigen::Vector3d;
using Vec6 = Eigen::Matrix<double, 6, 1>;
using Mat3 = Eigen::Matrix3d;
using Mat4 = Eigen::Matrix4d;
using Mat6X = Eigen::Matrix<double, 6, Eigen::Dynamic>;

inline constexpr double kPi = 3.14159265358979323846;
inline constexpr double kDegToRad = kPi / 180.0;
inline constexpr double kRadToDeg = 180.0 / kPi;

/// [x, y, z, alpha, beta, gamma] in mm / deg.
struct Pose6 {
  double x = 0.0;
  double y = 0.0;
  double z = 0.0;
  double alpha = 0.0;
  double beta = 0.0;
  double gamma = 0.0;

  Vec6 vec() const;
  static Pose6 from_vec(const Vec6& v);

  friend bool operator==(const Pose6&, const Pose6&) = default;
};

/// Rigid transform stored as a 4x4 homogeneous matrix.
class HomTransform {
 public:
  HomTransform() : m_(Mat4::Identity()) {}
  explicit HomTransform(const Mat4& m);
  HomTransform(const Mat3& rotation, const Vec3& translation);

  static HomTransform identity() { return HomTransform(); }

  const Mat4& matrix() const { return m_; }
  Mat3 rotation() const { return m_.topLeftCorner<3, 3>(); }
  Vec3 translation() const { return m_.topRightCorner<3, 1>(); }

  HomTransform operator*(const HomTransform& rhs) const;

 private:
  Mat4 m_;
};

struct DistancePair {
  double positional = 0.0;  // mm
  double rotational = 0.0;  // deg
};

Mat3 rotation_zyx_deg(double alpha, double beta, double gamma);

HomTransform pose_to_matrix(const Pose6& p);

/// Throws Error(kGimbalLock) when |cos(beta)| < 1e-8.
Pose6 matrix_to_pose(const HomTransform& t);

HomTransform compose(const HomTransform& a, const HomTransform& b);
HomTransform inverse(const HomTransform& t);

/// Squared R^6 distance, summed in a fixed order so every search path
/// compares bit-identical values.
double squared_distance(const Pose6& a, const Pose6& b);
double dist_l2_r6(const Pose6& a, const Pose6& b);
DistancePair dist_l1_split(const Pose6& a, const Pose6& b);

/// Derivative of matrix_to_pose(T) along each tangent direction dT[k].
/// Column k holds d(pose)/d(theta_k) given dT[k] = dT/d(theta_k).
Mat6X pose_jacobian(const HomTransform& t, std::span<const Mat4> d_transforms);

/// Rotation vector (axis * angle, degrees) of R_target * R_current^T.
Vec3 rotation_error_deg(const Mat3& target, const Mat3& current);

}  // namespace manifold_calib
