#pragma once

// Forward kinematics of a revolute serial chain (classic distal DH) with a
// uniform link-strain scalar r and per-joint encoder biases b.
//
//   joint angle used for row i : q_i - b_i + theta_offset_i
//   translational parameters   : (1 + r) * a_i, (1 + r) * d_i
//   twists                     : unscaled

#include <filesystem>
#include <string>
#include <vector>

#include <nlohmann/json_fwd.hpp>

#include "manifold_calib/se3.hpp"

namespace manifold_calib {

using JointVector = Eigen::VectorXd;  // deg

struct DHRow {
  double a = 0.0;             // mm
  double alpha_twist = 0.0;   // deg
  double d = 0.0;             // mm
  double theta_offset = 0.0;  // deg
};

class KinematicChain {
 public:
  KinematicChain() = default;
  /// Throws Error(kValidationError) on empty rows or non-finite entries.
  explicit KinematicChain(std::vector<DHRow> rows);

  const std::vector<DHRow>& rows() const { return rows_; }
  std::size_t size() const { return rows_.size(); }

 private:
  std::vector<DHRow> rows_;
};

/// theta = {r, b}. Strain is dimensionless, biases in degrees.
struct KinematicParams {
  double r = 0.0;
  Eigen::VectorXd b;

  static KinematicParams zero(std::size_t n) { return {0.0, Eigen::VectorXd::Zero(static_cast<Eigen::Index>(n))}; }

  /// Packs as [r, b_1 .. b_n].
  Eigen::VectorXd packed() const;
  static KinematicParams unpack(const Eigen::VectorXd& theta);

  /// Throws on |r| >= 0.5, |b_i| >= 45 deg, non-finite values or wrong length.
  void validate(std::size_t n) const;
};

/// Transform plus its partial derivatives: d_transform[0] = dT/dr,
/// d_transform[1 + i] = dT/db_i (per degree).
struct FkDerivatives {
  HomTransform transform;
  std::vector<Mat4> d_transform;
};

struct FkGradient {
  Pose6 pose;
  Mat6X jacobian;  // 6 x (n + 1), columns ordered [r, b_1 .. b_n]
};

HomTransform forward_kinematics(const KinematicChain& chain, const JointVector& q_measured,
                                const KinematicParams& params);

FkDerivatives forward_kinematics_derivatives(const KinematicChain& chain,
                                             const JointVector& q_measured,
                                             const KinematicParams& params);

/// Pose6 of the flange and its exact Jacobian w.r.t. (r, b).
FkGradient fk_gradient(const KinematicChain& chain, const JointVector& q_measured,
                       const KinematicParams& params);

KinematicChain parse_chain(const nlohmann::json& config);
KinematicChain load_chain(const std::filesystem::path& path);
nlohmann::json chain_to_json(const KinematicChain& chain);

/// 7-DOF chain with the LBR iiwa 14 R820 offsets (d = 360/0/420/0/400/0/126 mm,
/// twists -90/90/90/-90/-90/90/0 deg).
KinematicChain reference_chain();

}  // namespace manifold_calib
