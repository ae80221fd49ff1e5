#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>

#include <nlohmann/json.hpp>

#include "manifold_calib/error.hpp"
#include "manifold_calib/kinematics.hpp"
#include "support.hpp"

using namespace manifold_calib;

namespace {

KinematicChain planar(double l1, double l2) {
  return KinematicChain({{l1, 0.0, 0.0, 0.0}, {l2, 0.0, 0.0, 0.0}});
}

ErrorCode code_of(const std::function<void()>& fn) {
  try {
    fn();
  } catch (const Error& e) {
    return e.code();
  }
  ADD_FAILURE() << "no Error thrown";
  return ErrorCode::kIoError;
}

}  // namespace

TEST(Kinematics, PlanarTwoLinkMatchesTrigonometry) {
  const double l1 = 300.0, l2 = 200.0;
  const KinematicChain chain = planar(l1, l2);
  Rng rng(1);
  for (int i = 0; i < 200; ++i) {
    const double q1 = rng.uniform(-170, 170), q2 = rng.uniform(-170, 170);
    JointVector q(2);
    q << q1, q2;
    const Pose6 p = matrix_to_pose(forward_kinematics(chain, q, KinematicParams::zero(2)));
    const double t1 = q1 * kDegToRad, t12 = (q1 + q2) * kDegToRad;
    EXPECT_NEAR(p.x, l1 * std::cos(t1) + l2 * std::cos(t12), 1e-10);
    EXPECT_NEAR(p.y, l1 * std::sin(t1) + l2 * std::sin(t12), 1e-10);
    EXPECT_NEAR(p.z, 0.0, 1e-10);
    EXPECT_NEAR(std::remainder(p.gamma - (q1 + q2), 360.0), 0.0, 1e-10);
  }
}

TEST(Kinematics, PlanarStrainAndBias) {
  const KinematicChain chain = planar(100.0, 50.0);
  JointVector q(2);
  q << 30.0, 60.0;
  KinematicParams params{0.1, Eigen::Vector2d(30.0, 0.0)};
  // Bias 30 on joint 1 turns the reading 30 into a true angle of 0.
  const Pose6 p = matrix_to_pose(forward_kinematics(chain, q, params));
  EXPECT_NEAR(p.x, 110.0 + 55.0 * std::cos(60.0 * kDegToRad), 1e-10);
  EXPECT_NEAR(p.y, 55.0 * std::sin(60.0 * kDegToRad), 1e-10);
}

TEST(Kinematics, ReferenceChainStraightUp) {
  const KinematicChain chain = reference_chain();
  ASSERT_EQ(chain.size(), 7u);
  const HomTransform t = forward_kinematics(chain, JointVector::Zero(7), KinematicParams::zero(7));
  EXPECT_LT((t.translation() - Vec3(0, 0, 1306.0)).norm(), 1e-9);
}

TEST(Kinematics, BiasInversionOnRandomChains) {
  Rng rng(2);
  for (int i = 0; i < 1000; ++i) {
    const std::size_t n = 1 + rng.index(8);
    const KinematicChain chain = testsupport::random_chain(rng, n);
    const JointVector q_true = testsupport::random_joints(rng, n);
    KinematicParams params = testsupport::random_params(rng, n);
    const HomTransform measured = forward_kinematics(chain, q_true + params.b, params);
    KinematicParams no_bias = params;
    no_bias.b.setZero();
    const HomTransform truth = forward_kinematics(chain, q_true, no_bias);
    EXPECT_LT((measured.matrix() - truth.matrix()).cwiseAbs().maxCoeff(), 1e-9);
  }
}

TEST(Kinematics, StrainLeavesRotationUntouchedAndScalesTranslation) {
  Rng rng(3);
  for (int i = 0; i < 1000; ++i) {
    const std::size_t n = 1 + rng.index(8);
    const KinematicChain chain = testsupport::random_chain(rng, n);
    const JointVector q = testsupport::random_joints(rng, n);
    KinematicParams params = testsupport::random_params(rng, n);
    KinematicParams unstrained = params;
    unstrained.r = 0.0;
    const HomTransform a = forward_kinematics(chain, q, params);
    const HomTransform b = forward_kinematics(chain, q, unstrained);
    EXPECT_EQ(a.rotation(), b.rotation());
    EXPECT_LT((a.translation() - (1.0 + params.r) * b.translation()).norm(), 1e-9);
  }
}

TEST(Kinematics, DerivativesMatchCentralDifferences) {
  Rng rng(4);
  int checked = 0;
  while (checked < 100) {
    const std::size_t n = 2 + rng.index(6);
    const KinematicChain chain = testsupport::random_chain(rng, n);
    const JointVector q = testsupport::random_joints(rng, n);
    const KinematicParams params = testsupport::random_params(rng, n);
    const FkGradient g = fk_gradient(chain, q, params);
    if (std::abs(g.pose.beta) > 75.0 || std::abs(g.pose.alpha) > 170.0 || std::abs(g.pose.gamma) > 170.0) {
      continue;  // keep clear of gimbal lock and the +-180 wrap
    }
    Mat6X numeric(6, static_cast<Eigen::Index>(n + 1));
    const Eigen::VectorXd theta = params.packed();
    for (Eigen::Index k = 0; k < theta.size(); ++k) {
      const double h = k == 0 ? 1e-6 : 1e-5;
      Eigen::VectorXd up = theta, down = theta;
      up[k] += h;
      down[k] -= h;
      numeric.col(k) = (matrix_to_pose(forward_kinematics(chain, q, KinematicParams::unpack(up))).vec() -
                        matrix_to_pose(forward_kinematics(chain, q, KinematicParams::unpack(down))).vec()) /
                       (2.0 * h);
    }
    EXPECT_LT(testsupport::matrix_relative_error(g.jacobian, numeric), 1e-6);
    ++checked;
  }
}

TEST(Kinematics, DimensionMismatch) {
  const KinematicChain chain = reference_chain();
  EXPECT_EQ(code_of([&] { forward_kinematics(chain, JointVector::Zero(6), KinematicParams::zero(7)); }),
            ErrorCode::kDimensionMismatch);
  EXPECT_EQ(code_of([&] { forward_kinematics(chain, JointVector::Zero(7), KinematicParams::zero(3)); }),
            ErrorCode::kDimensionMismatch);
}

TEST(Kinematics, ParamsValidationAndPacking) {
  KinematicParams p{0.02, Eigen::Vector3d(1.0, -2.0, 3.0)};
  const KinematicParams back = KinematicParams::unpack(p.packed());
  EXPECT_EQ(back.r, p.r);
  EXPECT_EQ(back.b, p.b);
  EXPECT_NO_THROW(p.validate(3));
  EXPECT_EQ(code_of([&] { p.validate(4); }), ErrorCode::kDimensionMismatch);
  p.r = 0.6;
  EXPECT_EQ(code_of([&] { p.validate(3); }), ErrorCode::kValidationError);
  p.r = 0.0;
  p.b[1] = 50.0;
  EXPECT_EQ(code_of([&] { p.validate(3); }), ErrorCode::kValidationError);
}

TEST(Kinematics, ChainConfigRoundTripAndErrors) {
  const KinematicChain chain = reference_chain();
  const KinematicChain back = parse_chain(chain_to_json(chain));
  ASSERT_EQ(back.size(), chain.size());
  for (std::size_t i = 0; i < chain.size(); ++i) {
    EXPECT_EQ(back.rows()[i].d, chain.rows()[i].d);
    EXPECT_EQ(back.rows()[i].alpha_twist, chain.rows()[i].alpha_twist);
  }

  EXPECT_EQ(code_of([] { parse_chain(nlohmann::json::parse(R"({"rows":[{"a":1,"alpha":0,"d":0}]})")); }),
            ErrorCode::kParseError);
  EXPECT_EQ(code_of([] { parse_chain(nlohmann::json::parse(R"({"rows":[{"a":"x","alpha":0,"d":0,"theta":0}]})")); }),
            ErrorCode::kParseError);
  EXPECT_EQ(code_of([] { parse_chain(nlohmann::json::parse(R"({"rows":[]})")); }), ErrorCode::kValidationError);
  EXPECT_EQ(code_of([] { load_chain("/nonexistent/chain.json"); }), ErrorCode::kMissingArtifact);

  const auto path = std::filesystem::temp_directory_path() / "manifold_calib_bad_chain.json";
  std::ofstream(path) << "{not json";
  EXPECT_EQ(code_of([&] { load_chain(path); }), ErrorCode::kParseError);
  std::filesystem::remove(path);
}
