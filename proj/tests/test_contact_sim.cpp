#include <gtest/gtest.h>

#include "manifold_calib/contact_sim.hpp"
#include "manifold_calib/error.hpp"
#include "support.hpp"

using namespace manifold_calib;

TEST(ContactSim, SampledPosesAreContacts) {
  const AssemblyGeometry g = reference_geometry();
  for (ContactMode mode : {ContactMode::kRim, ContactMode::kWall, ContactMode::kTilted}) {
    for (std::uint64_t s = 0; s < 100; ++s) {
      Rng rng(stream_seed(5, s));
      const Pose6 p = sample_contact_pose(g, rng, mode);
      EXPECT_LE(std::abs(clearance_fn(g, p)), kContactTolerance);
      EXPECT_LT(std::abs(p.beta), 30.0);
    }
  }
}

TEST(ContactSim, ModesVisitDifferentRegions) {
  const AssemblyGeometry g = reference_geometry();
  Rng rng(1);
  double rim_z = 0.0, wall_z = 0.0;
  for (int i = 0; i < 50; ++i) {
    rim_z += sample_contact_pose(g, rng, ContactMode::kRim).z;
    wall_z += sample_contact_pose(g, rng, ContactMode::kWall).z;
  }
  EXPECT_GT(rim_z / 50.0, -1.0);   // resting on or catching the rim
  EXPECT_LT(wall_z / 50.0, -3.0);  // inside the pocket
}

TEST(ContactSim, StratifiedCycle) {
  EXPECT_EQ(stratified_mode(0), ContactMode::kRim);
  EXPECT_EQ(stratified_mode(1), ContactMode::kWall);
  EXPECT_EQ(stratified_mode(4), ContactMode::kTilted);
  EXPECT_EQ(stratified_mode(5), ContactMode::kRim);
}

TEST(ContactSim, ManifoldIsDeterministicAndDeduplicated) {
  const AssemblyGeometry g = reference_geometry();
  const ManifoldSet a = generate_manifold(g, 500, 42);
  const ManifoldSet b = generate_manifold(g, 500, 42);
  const ManifoldSet c = generate_manifold(g, 500, 43);
  ASSERT_EQ(a.size(), 500u);
  EXPECT_EQ(a.poses, b.poses);
  EXPECT_NE(a.poses, c.poses);
  for (std::size_t i = 0; i < a.size(); ++i) {
    EXPECT_LE(std::abs(clearance_fn(g, a.poses[i])), kContactTolerance);
    for (std::size_t j = i + 1; j < a.size(); ++j) EXPECT_GE(dist_l2_r6(a.poses[i], a.poses[j]), 1e-6);
  }
  EXPECT_THROW(generate_manifold(g, 0, 1), Error);
}

TEST(ContactSim, IkReachesFkTargets) {
  const KinematicChain chain = reference_chain();
  const SceneFrames frames = reference_frames();
  Rng rng(9);
  for (int i = 0; i < 30; ++i) {
    JointVector q_true = frames.home;
    for (Eigen::Index k = 0; k < q_true.size(); ++k) q_true[k] += rng.uniform(-15.0, 15.0);
    const KinematicParams strain{rng.uniform(-0.05, 0.05), Eigen::VectorXd::Zero(7)};
    const HomTransform target = forward_kinematics(chain, q_true, strain);
    const IkResult ik = inverse_kinematics(chain, target, frames.home, strain);
    const HomTransform reached = forward_kinematics(chain, ik.q, strain);
    EXPECT_LT((reached.translation() - target.translation()).norm(), 1e-5);
    EXPECT_LT(rotation_error_deg(target.rotation(), reached.rotation()).norm(), 1e-5);
  }
}

TEST(ContactSim, IkReportsUnreachableTargets) {
  const KinematicChain chain = reference_chain();
  const SceneFrames frames = reference_frames();
  try {
    inverse_kinematics(chain, pose_to_matrix({0, 0, 5000, 0, 0, 0}), frames.home);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::kIkDivergence);
  }
  EXPECT_THROW(inverse_kinematics(chain, HomTransform(), JointVector::Zero(3)), Error);
}

TEST(ContactSim, ObservationsReproduceTheirContacts) {
  const KinematicChain chain = reference_chain();
  const AssemblyGeometry g = reference_geometry();
  const SceneFrames frames = reference_frames(g);
  Rng rng(3);
  const KinematicParams truth = testsupport::random_params(rng, 7);
  SimulationOptions options;
  options.seed_jitter_deg = 20.0;
  const auto obs = simulate_observations(chain, g, frames, truth, 40, 77, options);
  ASSERT_EQ(obs.size(), 40u);
  for (const auto& o : obs) {
    const Pose6 p = matrix_to_pose(inverse(frames.base_T_hole) * forward_kinematics(chain, o.q, truth) *
                                   frames.ee_T_peg);
    EXPECT_LT((p.vec() - o.contact_pose.vec()).cwiseAbs().maxCoeff(), 1e-5);
    EXPECT_LE(std::abs(clearance_fn(g, p)), kContactTolerance + 1e-5);
  }
  const auto again = simulate_observations(chain, g, frames, truth, 40, 77, options);
  for (std::size_t i = 0; i < obs.size(); ++i) EXPECT_EQ(obs[i].q, again[i].q);
}

TEST(ContactSim, ZeroParamsUnderNonzeroTruthLeaveTheManifold) {
  const KinematicChain chain = reference_chain();
  const AssemblyGeometry g = reference_geometry();
  const SceneFrames frames = reference_frames(g);
  const KinematicParams truth{0.05, Eigen::VectorXd::Constant(7, 5.0)};
  const auto obs = simulate_observations(chain, g, frames, truth, 20, 5);
  for (const auto& o : obs) {
    const Pose6 p = matrix_to_pose(inverse(frames.base_T_hole) *
                                   forward_kinematics(chain, o.q, KinematicParams::zero(7)) * frames.ee_T_peg);
    EXPECT_GT(std::abs(clearance_fn(g, p)), 0.1);
  }
}

TEST(ContactSim, SimulationValidatesInputs) {
  const KinematicChain chain = reference_chain();
  const AssemblyGeometry g = reference_geometry();
  const SceneFrames frames = reference_frames(g);
  EXPECT_THROW(simulate_observations(chain, g, frames, KinematicParams::zero(7), 0, 1), Error);
  EXPECT_THROW(simulate_observations(chain, g, frames, KinematicParams::zero(6), 1, 1), Error);
  KinematicParams huge = KinematicParams::zero(7);
  huge.r = 0.9;
  EXPECT_THROW(simulate_observations(chain, g, frames, huge, 1, 1), Error);
}

TEST(ContactSim, FlangeTargetComposesFrames) {
  const SceneFrames frames = reference_frames();
  const Pose6 contact{0.3, -0.2, -5.0, 1.0, -2.0, 3.0};
  const HomTransform flange = flange_target(frames, contact);
  const Pose6 back = matrix_to_pose(inverse(frames.base_T_hole) * flange * frames.ee_T_peg);
  EXPECT_LT((back.vec() - contact.vec()).cwiseAbs().maxCoeff(), 1e-10);
}
