#pragma once

// Recovers link strain and encoder biases from contact-time joint readings by
// driving the predicted hole-frame peg poses onto the learned manifold
// projection.

#include <cstdint>
#include <memory>
#include <optional>
#include <vector>

#include "manifold_calib/contact_sim.hpp"
#include "manifold_calib/mlp.hpp"
#include "manifold_calib/nn_index.hpp"

namespace manifold_calib {

struct CalibrationProblem {
  KinematicChain chain;
  HomTransform base_T_hole;
  HomTransform ee_T_peg;
  std::vector<ContactObservation> observations;
  MlpModel model;
  /// Optional; enables extrapolation counting in the diagnostics.
  std::shared_ptr<const NearestNeighborIndex> manifold;
  /// Project with the mirror-averaged network (see Projector). Cancels the
  /// network's odd-component bias on the manifold, which otherwise leaks into
  /// the weakly observable last-joint bias.
  bool mirror_symmetric = true;

  /// Throws Error(kValidationError) on an empty observation set, joint vectors
  /// that do not match the chain, or an invalid model.
  void validate() const;
};

/// Pose of the peg in the hole frame implied by reading q under params.
Pose6 predicted_contact_pose(const CalibrationProblem& problem, const JointVector& q,
                             const KinematicParams& params);

/// Same pose plus its 6 x (n + 1) Jacobian w.r.t. [r, b_1 .. b_n].
FkGradient predicted_contact_pose_gradient(const CalibrationProblem& problem, const JointVector& q,
                                           const KinematicParams& params);

struct LossOptions {
  bool stop_gradient = false;  // treat the projection as a constant target
  bool want_gradient = true;
  bool count_extrapolation = false;  // requires problem.manifold
  unsigned threads = 1;
  /// Restricts the loss to these observation indices (empty = all).
  std::vector<std::size_t> subset;
};

struct LossValue {
  double total = 0.0;
  double positional = 0.0;  // mean positional L1, mm
  double rotational = 0.0;  // mean rotational L1, deg
  Eigen::VectorXd gradient;  // packed [r, b...]; empty unless requested
  std::size_t extrapolated = 0;
};

LossValue calibration_loss(const CalibrationProblem& problem, const KinematicParams& params,
                           const LossOptions& options = {});

struct OptimizeConfig {
  double lr_strain = 1e-3;
  double lr_bias = 0.1;  // deg
  int max_iterations = 400;
  double tolerance = 1e-6;  // best-loss improvement over `window` iterations
  int window = 50;
  std::size_t subsample = 0;  // observations per iteration (0 = all)
  std::uint64_t seed = 1;
  bool stop_gradient = false;
  double final_lr_fraction = 1.0;  // cosine decay of both rates to this fraction
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
  unsigned threads = 1;

  void validate() const;
};

struct CalibrationResult {
  KinematicParams params;  // best iterate
  std::vector<double> positional_history;
  std::vector<double> rotational_history;
  std::vector<double> total_history;
  std::vector<double> best_history;  // best-so-far total
  int iterations = 0;
  int best_iteration = 0;
  bool converged = false;
  /// Packed parameter indices with |dL/dtheta| < 1e-8 at the starting point.
  std::vector<std::size_t> flat_parameters;
  std::size_t extrapolated = 0;  // at the returned parameters
};

/// Adaptive-moment descent from theta = 0. Throws Error(kNonFiniteLoss).
CalibrationResult optimize(const CalibrationProblem& problem, const OptimizeConfig& config);

inline constexpr double kFoldReductionCap = 1e6;

struct ErrorReport {
  double strain_abs_error = 0.0;
  double bias_mae = 0.0;  // deg
  double strain_initial_error = 0.0;
  double bias_initial_error = 0.0;
  double strain_fold_reduction = 0.0;  // capped at 1e6
  double bias_fold_reduction = 0.0;
};

ErrorReport evaluate(const KinematicParams& estimate, const KinematicParams& truth);

}  // namespace manifold_calib
