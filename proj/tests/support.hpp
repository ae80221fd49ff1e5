#pragma once

// Random instance generators shared by the property tests.

#include <algorithm>
#include <cmath>
#include <vector>

#include "manifold_calib/kinematics.hpp"
#include "manifold_calib/rng.hpp"
#include "manifold_calib/se3.hpp"

namespace testsupport {

using namespace manifold_calib;

inline Pose6 random_pose(Rng& rng, double trans = 100.0, double max_beta = 80.0) {
  return {rng.uniform(-trans, trans), rng.uniform(-trans, trans), rng.uniform(-trans, trans),
          rng.uniform(-179.0, 179.0), rng.uniform(-max_beta, max_beta), rng.uniform(-179.0, 179.0)};
}

inline KinematicChain random_chain(Rng& rng, std::size_t joints) {
  std::vector<DHRow> rows(joints);
  for (auto& row : rows) {
    row.a = rng.uniform(-200.0, 200.0);
    row.alpha_twist = rng.uniform(-180.0, 180.0);
    row.d = rng.uniform(-200.0, 200.0);
    row.theta_offset = rng.uniform(-90.0, 90.0);
  }
  return KinematicChain(rows);
}

inline JointVector random_joints(Rng& rng, std::size_t n, double range = 170.0) {
  JointVector q(static_cast<Eigen::Index>(n));
  for (Eigen::Index i = 0; i < q.size(); ++i) q[i] = rng.uniform(-range, range);
  return q;
}

inline KinematicParams random_params(Rng& rng, std::size_t n, double strain = 0.05, double bias = 5.0) {
  KinematicParams p = KinematicParams::zero(n);
  p.r = rng.uniform(-strain, strain);
  for (Eigen::Index i = 0; i < p.b.size(); ++i) p.b[i] = rng.uniform(-bias, bias);
  return p;
}

/// |a - b| / max(|a|, |b|, floor).
inline double relative_error(double a, double b, double floor = 1e-6) {
  return std::abs(a - b) / std::max({std::abs(a), std::abs(b), floor});
}

/// Largest relative error between matrices, each entry scaled by the matrix
/// magnitude so near-zero entries do not dominate.
template <typename A, typename B>
double matrix_relative_error(const A& analytic, const B& numeric) {
  const double scale = std::max({analytic.cwiseAbs().maxCoeff(), numeric.cwiseAbs().maxCoeff(), 1e-12});
  return (analytic - numeric).cwiseAbs().maxCoeff() / scale;
}

}  // namespace testsupport
