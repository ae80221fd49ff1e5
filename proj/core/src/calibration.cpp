#include "manifold_calib/calibration.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <string>

#include <spdlog/spdlog.h>

#include "manifold_calib/error.hpp"
#include "manifold_calib/parallel.hpp"
#include "manifold_calib/projection.hpp"
#include "manifold_calib/rng.hpp"

namespace manifold_calib {

namespace {

constexpr double kFlatGradient = 1e-8;

double sign(double v) { return v > 0.0 ? 1.0 : (v < 0.0 ? -1.0 : 0.0); }

// A zero initial error (identity truth) has nothing to reduce and reports the cap.
double fold(double initial, double final_error) {
  if (final_error <= 0.0 || initial <= 0.0) return kFoldReductionCap;
  return std::min(initial / final_error, kFoldReductionCap);
}

}  // namespace

void CalibrationProblem::validate() const {
  if (observations.empty()) throw Error(ErrorCode::kValidationError, "calibration needs at least one observation");
  for (const auto& obs : observations) {
    if (obs.q.size() != static_cast<Eigen::Index>(chain.size())) {
      throw Error(ErrorCode::kDimensionMismatch,
                  "observation has " + std::to_string(obs.q.size()) + " joints, chain has " +
                      std::to_string(chain.size()));
    }
  }
  model.validate();
}

Pose6 predicted_contact_pose(const CalibrationProblem& problem, const JointVector& q,
                             const KinematicParams& params) {
  return matrix_to_pose(inverse(problem.base_T_hole) * forward_kinematics(problem.chain, q, params) *
                        problem.ee_T_peg);
}

FkGradient predicted_contact_pose_gradient(const CalibrationProblem& problem, const JointVector& q,
                                           const KinematicParams& params) {
  const FkDerivatives fk = forward_kinematics_derivatives(problem.chain, q, params);
  const Mat4 hole_T_base = inverse(problem.base_T_hole).matrix();
  const Mat4& ee_T_peg = problem.ee_T_peg.matrix();
  const HomTransform t(Mat4(hole_T_base * fk.transform.matrix() * ee_T_peg));
  std::vector<Mat4> d(fk.d_transform.size());
  for (std::size_t k = 0; k < d.size(); ++k) d[k] = hole_T_base * fk.d_transform[k] * ee_T_peg;
  return {matrix_to_pose(t), pose_jacobian(t, d)};
}

LossValue calibration_loss(const CalibrationProblem& problem, const KinematicParams& params,
                           const LossOptions& options) {
  std::vector<std::size_t> all;
  const std::vector<std::size_t>* indices = &options.subset;
  if (options.subset.empty()) {
    all.resize(problem.observations.size());
    std::iota(all.begin(), all.end(), 0);
    indices = &all;
  }
  const std::size_t m = indices->size();
  if (m == 0) throw Error(ErrorCode::kValidationError, "calibration loss over zero observations");
  const auto cols = static_cast<Eigen::Index>(m);
  const Normalization& norm = problem.model.normalization;

  Eigen::MatrixXd predicted(6, cols);
  std::vector<Mat6X> jacobians(options.want_gradient ? m : 0);
  parallel_for(m, options.threads, [&](std::size_t j) {
    const JointVector& q = problem.observations[(*indices)[j]].q;
    if (options.want_gradient) {
      FkGradient g = predicted_contact_pose_gradient(problem, q, params);
      predicted.col(static_cast<Eigen::Index>(j)) = g.pose.vec();
      jacobians[j] = std::move(g.jacobian);
    } else {
      predicted.col(static_cast<Eigen::Index>(j)) = predicted_contact_pose(problem, q, params).vec();
    }
  });

  auto project = [&](const Eigen::MatrixXd& poses, ForwardCache* cache) -> Eigen::MatrixXd {
    const Eigen::MatrixXd x = (poses.colwise() - norm.input_mean).array().colwise() / norm.input_std.array();
    const Eigen::MatrixXd y = forward_normalized(problem.model, x, cache);
    return (y.array().colwise() * norm.output_std.array()).matrix().colwise() + norm.output_mean;
  };
  // Vector-Jacobian product of `project` in pose units.
  auto pullback = [&](const ForwardCache& cache, const Eigen::MatrixXd& g_out) -> Eigen::MatrixXd {
    const Eigen::MatrixXd g_out_norm = g_out.array().colwise() * norm.output_std.array();
    return backward_inputs(problem.model, cache, g_out_norm).array().colwise() / norm.input_std.array();
  };

  const auto mirror = mirror_signs().asDiagonal();
  ForwardCache cache, mirror_cache;
  Eigen::MatrixXd projected = project(predicted, options.want_gradient ? &cache : nullptr);
  if (problem.mirror_symmetric) {
    projected = 0.5 * (projected + mirror * project(mirror * predicted, options.want_gradient ? &mirror_cache : nullptr));
  }
  const Eigen::MatrixXd residual = predicted - projected;

  LossValue out;
  const double inv_m = 1.0 / static_cast<double>(m);
  out.positional = residual.topRows<3>().cwiseAbs().sum() * inv_m;
  out.rotational = residual.bottomRows<3>().cwiseAbs().sum() * inv_m;
  out.total = out.positional + out.rotational;

  if (options.count_extrapolation && problem.manifold) {
    for (Eigen::Index j = 0; j < cols; ++j) {
      const Pose6 p = Pose6::from_vec(predicted.col(j));
      if (problem.manifold->nearest(p).distance > kExtrapolationDistance) ++out.extrapolated;
    }
    if (out.extrapolated > 0) {
      spdlog::warn("{} of {} predicted contact poses lie outside the trained region", out.extrapolated, m);
    }
  }

  if (!options.want_gradient) return out;

  // d total / d predicted, through both the direct term and the projection.
  Eigen::MatrixXd g_pred = residual.unaryExpr([](double v) { return sign(v); }) * inv_m;
  if (!options.stop_gradient) {
    const Eigen::MatrixXd g_projected = -g_pred;
    if (problem.mirror_symmetric) {
      g_pred += 0.5 * (pullback(cache, g_projected) + mirror * pullback(mirror_cache, mirror * g_projected));
    } else {
      g_pred += pullback(cache, g_projected);
    }
  }

  out.gradient = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(problem.chain.size() + 1));
  for (std::size_t j = 0; j < m; ++j) {
    out.gradient.noalias() += jacobians[j].transpose() * g_pred.col(static_cast<Eigen::Index>(j));
  }
  return out;
}

void OptimizeConfig::validate() const {
  if (!(lr_strain > 0.0) || !(lr_bias > 0.0) || max_iterations <= 0 || window <= 0 ||
      !(final_lr_fraction > 0.0) || final_lr_fraction > 1.0) {
    throw Error(ErrorCode::kValidationError,
                "learning rates and iteration counts must be positive, lr fraction in (0, 1]");
  }
}

CalibrationResult optimize(const CalibrationProblem& problem, const OptimizeConfig& config) {
  problem.validate();
  config.validate();
  const std::size_t n = problem.chain.size();
  const std::size_t m = problem.observations.size();
  const auto dim = static_cast<Eigen::Index>(n + 1);

  Eigen::VectorXd theta = Eigen::VectorXd::Zero(dim);
  Eigen::VectorXd lr = Eigen::VectorXd::Constant(dim, config.lr_bias);
  lr[0] = config.lr_strain;
  Eigen::VectorXd m1 = Eigen::VectorXd::Zero(dim), m2 = Eigen::VectorXd::Zero(dim);

  CalibrationResult result;
  result.params = KinematicParams::zero(n);
  double best = std::numeric_limits<double>::infinity();

  LossOptions options;
  options.stop_gradient = config.stop_gradient;
  options.threads = config.threads;
  const bool subsample = config.subsample > 0 && config.subsample < m;

  for (int it = 0; it < config.max_iterations; ++it) {
    options.subset.clear();
    if (subsample) {
      Rng rng(stream_seed(config.seed, static_cast<std::uint64_t>(it)));
      std::vector<std::size_t> pool(m);
      std::iota(pool.begin(), pool.end(), 0);
      for (std::size_t k = 0; k < config.subsample; ++k) std::swap(pool[k], pool[k + rng.index(m - k)]);
      options.subset.assign(pool.begin(), pool.begin() + static_cast<std::ptrdiff_t>(config.subsample));
      std::sort(options.subset.begin(), options.subset.end());
    }

    const KinematicParams params = KinematicParams::unpack(theta);
    const LossValue loss = calibration_loss(problem, params, options);
    if (!std::isfinite(loss.total) || !loss.gradient.allFinite()) {
      throw Error(ErrorCode::kNonFiniteLoss,
                  "calibration loss became non-finite at iteration " + std::to_string(it));
    }
    result.positional_history.push_back(loss.positional);
    result.rotational_history.push_back(loss.rotational);
    result.total_history.push_back(loss.total);
    if (loss.total < best) {
      best = loss.total;
      result.params = params;
      result.best_iteration = it;
    }
    result.best_history.push_back(best);
    result.iterations = it + 1;

    if (it == 0) {
      for (Eigen::Index k = 0; k < dim; ++k) {
        if (std::abs(loss.gradient[k]) < kFlatGradient) result.flat_parameters.push_back(static_cast<std::size_t>(k));
      }
      if (!result.flat_parameters.empty()) {
        spdlog::warn("loss is flat along {} parameter direction(s) at the starting point",
                     result.flat_parameters.size());
      }
    }
    spdlog::debug("iter {} loss {:.6f} (pos {:.6f}, rot {:.6f}) r {:.6f}", it, loss.total,
                  loss.positional, loss.rotational, theta[0]);

    if (it >= config.window &&
        result.best_history[static_cast<std::size_t>(it - config.window)] - best < config.tolerance) {
      result.converged = true;
      break;
    }

    const double progress = static_cast<double>(it) / static_cast<double>(config.max_iterations);
    const double scale = config.final_lr_fraction +
                         0.5 * (1.0 - config.final_lr_fraction) * (1.0 + std::cos(kPi * progress));
    const double step = static_cast<double>(it + 1);
    m1 = config.beta1 * m1 + (1.0 - config.beta1) * loss.gradient;
    m2 = config.beta2 * m2 + (1.0 - config.beta2) * loss.gradient.cwiseAbs2();
    const Eigen::VectorXd m1_hat = m1 / (1.0 - std::pow(config.beta1, step));
    const Eigen::VectorXd m2_hat = m2 / (1.0 - std::pow(config.beta2, step));
    theta.array() -= scale * lr.array() * m1_hat.array() / (m2_hat.array().sqrt() + config.epsilon);
  }

  if (problem.manifold) {
    LossOptions final_options;
    final_options.want_gradient = false;
    final_options.count_extrapolation = true;
    final_options.threads = config.threads;
    result.extrapolated = calibration_loss(problem, result.params, final_options).extrapolated;
  }
  return result;
}

ErrorReport evaluate(const KinematicParams& estimate, const KinematicParams& truth) {
  if (estimate.b.size() != truth.b.size()) {
    throw Error(ErrorCode::kDimensionMismatch, "estimate and truth have different bias lengths");
  }
  ErrorReport report;
  report.strain_abs_error = std::abs(estimate.r - truth.r);
  report.strain_initial_error = std::abs(truth.r);
  if (truth.b.size() > 0) {
    report.bias_mae = (estimate.b - truth.b).cwiseAbs().mean();
    report.bias_initial_error = truth.b.cwiseAbs().mean();
  }
  report.strain_fold_reduction = fold(report.strain_initial_error, report.strain_abs_error);
  report.bias_fold_reduction = fold(report.bias_initial_error, report.bias_mae);
  return report;
}

}  // namespace manifold_calib
