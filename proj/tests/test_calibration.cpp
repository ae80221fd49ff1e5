#include <gtest/gtest.h>

#include "manifold_calib/calibration.hpp"
#include "manifold_calib/error.hpp"
#include "support.hpp"

using namespace manifold_calib;

namespace {

struct Scene {
  AssemblyGeometry geom = reference_geometry();
  SceneFrames frames = reference_frames(geom);
  KinematicChain chain = reference_chain();
};

CalibrationProblem make_problem(const Scene& s, const KinematicParams& truth, std::size_t m, std::uint64_t seed,
                                MlpModel model) {
  CalibrationProblem p;
  p.chain = s.chain;
  p.base_T_hole = s.frames.base_T_hole;
  p.ee_T_peg = s.frames.ee_T_peg;
  SimulationOptions options;
  options.seed_jitter_deg = 20.0;
  p.observations = simulate_observations(s.chain, s.geom, s.frames, truth, m, seed, options);
  p.model = std::move(model);
  return p;
}

// Untrained network with contact-scale normalization so the gradient path
// through the projection is exercised with realistic magnitudes.
MlpModel random_projection(std::uint64_t seed) {
  MlpModel model = MlpModel::random(MlpModel::architecture(32, 2), seed);
  model.normalization.input_mean << 0, 0, -8, 0, 0, 0;
  model.normalization.input_std << 4, 4, 8, 5, 5, 5;
  model.normalization.output_mean = model.normalization.input_mean;
  model.normalization.output_std = model.normalization.input_std;
  return model;
}

// Projection that returns its input exactly.
MlpModel identity_projection() {
  MlpModel model({6, 6});
  model.weights()[0].setIdentity();
  return model;
}

// Reflection through the hole x-z plane: y, alpha and gamma change sign.
const Vec6 kMirror = (Vec6() << 1, -1, 1, -1, 1, -1).finished();

// Hidden-unit on/off pattern of the projection network for every network
// evaluation the loss makes (each observation, plus its mirror image).
Eigen::ArrayXXi relu_pattern(const CalibrationProblem& p, const KinematicParams& params) {
  const Normalization& n = p.model.normalization;
  const std::size_t copies = p.mirror_symmetric ? 2 : 1;
  Eigen::MatrixXd x(6, static_cast<Eigen::Index>(copies * p.observations.size()));
  for (std::size_t i = 0; i < p.observations.size(); ++i) {
    const Vec6 pred = predicted_contact_pose(p, p.observations[i].q, params).vec();
    x.col(static_cast<Eigen::Index>(copies * i)) = n.normalize_input(pred);
    if (copies == 2) x.col(static_cast<Eigen::Index>(2 * i + 1)) = n.normalize_input(kMirror.cwiseProduct(pred));
  }
  ForwardCache cache;
  forward_normalized(p.model, x, &cache);
  Eigen::MatrixXd stacked(0, x.cols());
  for (std::size_t k = 1; k + 1 < cache.activations.size(); ++k) {
    Eigen::MatrixXd grown(stacked.rows() + cache.activations[k].rows(), x.cols());
    grown << stacked, cache.activations[k];
    stacked = grown;
  }
  return (stacked.array() > 0.0).cast<int>();
}

Eigen::MatrixXd residuals(const CalibrationProblem& p, const KinematicParams& params) {
  Eigen::MatrixXd r(6, static_cast<Eigen::Index>(p.observations.size()));
  for (std::size_t i = 0; i < p.observations.size(); ++i) {
    const Pose6 pred = predicted_contact_pose(p, p.observations[i].q, params);
    Vec6 projected = mlp_forward(p.model, pred).vec();
    if (p.mirror_symmetric) {
      const Pose6 mirrored = Pose6::from_vec(kMirror.cwiseProduct(pred.vec()));
      projected = 0.5 * (projected + kMirror.cwiseProduct(mlp_forward(p.model, mirrored).vec()));
    }
    r.col(static_cast<Eigen::Index>(i)) = pred.vec() - projected;
  }
  return r;
}

}  // namespace

TEST(Calibration, PredictedPoseAtTruthIsTheContact) {
  const Scene s;
  Rng rng(1);
  const KinematicParams truth = testsupport::random_params(rng, 7);
  const CalibrationProblem p = make_problem(s, truth, 20, 2, identity_projection());
  for (const auto& o : p.observations) {
    const Pose6 pred = predicted_contact_pose(p, o.q, truth);
    EXPECT_LT((pred.vec() - o.contact_pose.vec()).cwiseAbs().maxCoeff(), 1e-5);
    EXPECT_LE(std::abs(clearance_fn(s.geom, pred)), kContactTolerance + 1e-5);
  }
}

TEST(Calibration, PureBiasTruthInvertsExactly) {
  const Scene s;
  const KinematicParams truth{0.0, (Eigen::VectorXd(7) << 1, -2, 3, -4, 5, -1, 2).finished()};
  const CalibrationProblem p = make_problem(s, truth, 10, 3, identity_projection());
  for (const auto& o : p.observations) {
    const Pose6 pred = predicted_contact_pose(p, o.q, truth);
    EXPECT_LT((pred.vec() - o.contact_pose.vec()).cwiseAbs().maxCoeff(), 1e-5);
  }
}

TEST(Calibration, PoseGradientMatchesFiniteDifferences) {
  const Scene s;
  Rng rng(4);
  const CalibrationProblem p = make_problem(s, testsupport::random_params(rng, 7), 10, 5, identity_projection());
  for (const auto& o : p.observations) {
    const KinematicParams at = testsupport::random_params(rng, 7);
    const FkGradient g = predicted_contact_pose_gradient(p, o.q, at);
    EXPECT_EQ(g.pose, predicted_contact_pose(p, o.q, at));
    Mat6X numeric(6, 8);
    const Eigen::VectorXd theta = at.packed();
    for (Eigen::Index k = 0; k < 8; ++k) {
      const double h = k == 0 ? 1e-6 : 1e-5;
      Eigen::VectorXd up = theta, down = theta;
      up[k] += h;
      down[k] -= h;
      numeric.col(k) = (predicted_contact_pose(p, o.q, KinematicParams::unpack(up)).vec() -
                        predicted_contact_pose(p, o.q, KinematicParams::unpack(down)).vec()) /
                       (2.0 * h);
    }
    EXPECT_LT(testsupport::matrix_relative_error(g.jacobian, numeric), 1e-6);
  }
}

TEST(Calibration, LossMatchesItsDefinition) {
  const Scene s;
  Rng rng(6);
  const CalibrationProblem p = make_problem(s, testsupport::random_params(rng, 7), 25, 7, random_projection(8));
  const KinematicParams at = testsupport::random_params(rng, 7);
  const Eigen::MatrixXd r = residuals(p, at);
  const LossValue loss = calibration_loss(p, at);
  const double m = static_cast<double>(p.observations.size());
  EXPECT_NEAR(loss.positional, r.topRows<3>().cwiseAbs().sum() / m, 1e-9);
  EXPECT_NEAR(loss.rotational, r.bottomRows<3>().cwiseAbs().sum() / m, 1e-9);
  EXPECT_DOUBLE_EQ(loss.total, loss.positional + loss.rotational);

  LossOptions subset;
  subset.subset = {3, 7};
  const LossValue partial = calibration_loss(p, at, subset);
  EXPECT_NEAR(partial.total, (r.col(3).cwiseAbs().sum() + r.col(7).cwiseAbs().sum()) / 2.0, 1e-9);

  CalibrationProblem plain = p;
  plain.mirror_symmetric = false;
  const Eigen::MatrixXd r_plain = residuals(plain, at);
  EXPECT_NEAR(calibration_loss(plain, at).total, r_plain.cwiseAbs().sum() / m, 1e-9);
  EXPECT_GT((r_plain - r).cwiseAbs().maxCoeff(), 1e-6);
}

TEST(Calibration, MirrorAveragedLossIsMirrorInvariant) {
  // Mirroring every contact maps the last-joint bias b7 to -b7 for this
  // chain; the equivariant projection must then give the same loss.
  const Scene s;
  const MlpModel model = random_projection(31);
  for (const bool symmetric : {true, false}) {
    std::vector<double> losses;
    for (const double b7 : {0.4, -0.4}) {
      CalibrationProblem p;
      p.chain = s.chain;
      p.base_T_hole = s.frames.base_T_hole;
      p.ee_T_peg = s.frames.ee_T_peg;
      p.model = model;
      p.mirror_symmetric = symmetric;
      p.observations.resize(1);
      p.observations[0].q = s.frames.home;
      KinematicParams at = KinematicParams::zero(7);
      at.b[6] = b7;
      // The home posture keeps the flange on the hole's x-z plane, so joint 7
      // alone rotates the peg about its axis: gamma -> -gamma is the mirror.
      losses.push_back(calibration_loss(p, at).total);
    }
    if (symmetric) {
      EXPECT_NEAR(losses[0], losses[1], 1e-9);
    } else {
      EXPECT_GT(std::abs(losses[0] - losses[1]), 1e-9);
    }
  }
}

TEST(Calibration, LossGradientMatchesFiniteDifferencesAwayFromKinks) {
  const Scene s;
  Rng rng(9);
  CalibrationProblem p = make_problem(s, testsupport::random_params(rng, 7), 30, 10, random_projection(11));
  int checked = 0;
  while (checked < 60) {
    p.mirror_symmetric = checked % 2 == 0;
    const KinematicParams at = testsupport::random_params(rng, 7);
    const Eigen::VectorXd theta = at.packed();
    const LossValue loss = calibration_loss(p, at);
    Eigen::VectorXd numeric(8);
    bool kink = false;
    const Eigen::MatrixXd r0 = residuals(p, at);
    const Eigen::ArrayXXi pattern0 = relu_pattern(p, at);
    for (Eigen::Index k = 0; k < 8 && !kink; ++k) {
      const double h = 1e-4;
      Eigen::VectorXd up = theta, down = theta;
      up[k] += h;
      down[k] -= h;
      const KinematicParams pu = KinematicParams::unpack(up), pd = KinematicParams::unpack(down);
      const Eigen::MatrixXd ru = residuals(p, pu), rd = residuals(p, pd);
      kink = ((ru.array() * r0.array()) <= 0).any() || ((rd.array() * r0.array()) <= 0).any() ||
             (relu_pattern(p, pu) != pattern0).any() || (relu_pattern(p, pd) != pattern0).any();
      LossOptions value_only;
      value_only.want_gradient = false;
      numeric[k] = (calibration_loss(p, pu, value_only).total - calibration_loss(p, pd, value_only).total) / (2 * h);
    }
    if (kink) continue;
    EXPECT_LT(testsupport::matrix_relative_error(loss.gradient, numeric), 1e-3)
        << "instance " << checked << (p.mirror_symmetric ? " (mirror-averaged)" : " (plain)");
    ++checked;
  }
}

TEST(Calibration, StopGradientIgnoresTheProjectionPath) {
  const Scene s;
  Rng rng(12);
  const CalibrationProblem p = make_problem(s, testsupport::random_params(rng, 7), 15, 13, random_projection(14));
  const KinematicParams at = testsupport::random_params(rng, 7);
  LossOptions frozen;
  frozen.stop_gradient = true;
  const LossValue loss = calibration_loss(p, at, frozen);
  const Eigen::MatrixXd r = residuals(p, at);
  Eigen::VectorXd expected = Eigen::VectorXd::Zero(8);
  for (std::size_t i = 0; i < p.observations.size(); ++i) {
    const FkGradient g = predicted_contact_pose_gradient(p, p.observations[i].q, at);
    const Vec6 sign = r.col(static_cast<Eigen::Index>(i)).unaryExpr([](double v) { return v > 0 ? 1.0 : (v < 0 ? -1.0 : 0.0); });
    expected += g.jacobian.transpose() * sign / static_cast<double>(p.observations.size());
  }
  EXPECT_LT(testsupport::matrix_relative_error(loss.gradient, expected), 1e-12);
  EXPECT_GT((calibration_loss(p, at).gradient - loss.gradient).norm(), 0.0);
}

TEST(Calibration, FlatLossIsFlaggedAndStaysAtZero) {
  const Scene s;
  const CalibrationProblem p = make_problem(s, KinematicParams::zero(7), 10, 15, identity_projection());
  OptimizeConfig config;
  config.max_iterations = 60;
  const CalibrationResult result = optimize(p, config);
  EXPECT_EQ(result.flat_parameters.size(), 8u);
  EXPECT_EQ(result.params.r, 0.0);
  EXPECT_EQ(result.params.b, Eigen::VectorXd::Zero(7));
  EXPECT_TRUE(result.converged);
}

TEST(Calibration, OptimizerBookkeeping) {
  const Scene s;
  Rng rng(16);
  const CalibrationProblem p = make_problem(s, testsupport::random_params(rng, 7), 40, 17, random_projection(18));
  OptimizeConfig config;
  config.max_iterations = 80;
  config.subsample = 20;
  const CalibrationResult a = optimize(p, config);
  const CalibrationResult b = optimize(p, config);
  EXPECT_EQ(a.params.packed(), b.params.packed());
  EXPECT_EQ(a.total_history, b.total_history);
  EXPECT_LE(a.total_history.size(), 80u);
  EXPECT_EQ(a.total_history.size(), static_cast<std::size_t>(a.iterations));
  for (std::size_t i = 1; i < a.best_history.size(); ++i) EXPECT_LE(a.best_history[i], a.best_history[i - 1]);
  EXPECT_EQ(a.best_history.back(), a.total_history[static_cast<std::size_t>(a.best_iteration)]);
  for (std::size_t i = 0; i < a.total_history.size(); ++i) {
    EXPECT_DOUBLE_EQ(a.total_history[i], a.positional_history[i] + a.rotational_history[i]);
  }
}

TEST(Calibration, RejectsInvalidProblems) {
  const Scene s;
  CalibrationProblem p = make_problem(s, KinematicParams::zero(7), 5, 19, identity_projection());
  OptimizeConfig config;
  config.lr_bias = 0.0;
  EXPECT_THROW(optimize(p, config), Error);
  p.observations[0].q = JointVector::Zero(6);
  try {
    optimize(p, OptimizeConfig{});
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::kDimensionMismatch);
  }
  p.observations.clear();
  EXPECT_THROW(optimize(p, OptimizeConfig{}), Error);
}

TEST(Calibration, EvaluateReportsFoldReductions) {
  const KinematicParams truth{0.04, (Eigen::VectorXd(3) << 2, -4, 6).finished()};
  const ErrorReport perfect = evaluate(truth, truth);
  EXPECT_EQ(perfect.strain_abs_error, 0.0);
  EXPECT_EQ(perfect.bias_mae, 0.0);
  EXPECT_EQ(perfect.strain_fold_reduction, kFoldReductionCap);
  EXPECT_EQ(perfect.bias_fold_reduction, kFoldReductionCap);

  const ErrorReport none = evaluate(KinematicParams::zero(3), truth);
  EXPECT_DOUBLE_EQ(none.strain_fold_reduction, 1.0);
  EXPECT_DOUBLE_EQ(none.bias_fold_reduction, 1.0);
  EXPECT_DOUBLE_EQ(none.bias_initial_error, 4.0);

  KinematicParams half = truth;
  half.r = 0.02;
  half.b << 1, -2, 3;
  const ErrorReport r = evaluate(half, truth);
  EXPECT_DOUBLE_EQ(r.strain_fold_reduction, 2.0);
  EXPECT_DOUBLE_EQ(r.bias_mae, 2.0);
  EXPECT_DOUBLE_EQ(r.bias_fold_reduction, 2.0);

  KinematicParams off = KinematicParams::zero(3);
  off.r = 1e-4;
  const ErrorReport identity = evaluate(off, KinematicParams::zero(3));
  EXPECT_EQ(identity.strain_fold_reduction, kFoldReductionCap);
  EXPECT_THROW(evaluate(KinematicParams::zero(2), truth), Error);
}
