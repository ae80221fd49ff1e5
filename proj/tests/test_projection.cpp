#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>

#include "manifold_calib/error.hpp"
#include "manifold_calib/projection.hpp"
#include "support.hpp"

using namespace manifold_calib;

namespace {

Pose6 recovered_offset(const Pose6& base, const Pose6& perturbed) {
  return matrix_to_pose(inverse(pose_to_matrix(base)) * pose_to_matrix(perturbed));
}

// Kolmogorov-Smirnov statistic of samples against U(lo, hi).
double ks_uniform(std::vector<double> xs, double lo, double hi) {
  std::sort(xs.begin(), xs.end());
  const double n = static_cast<double>(xs.size());
  double d = 0.0;
  for (std::size_t i = 0; i < xs.size(); ++i) {
    const double f = (xs[i] - lo) / (hi - lo);
    d = std::max({d, f - static_cast<double>(i) / n, static_cast<double>(i + 1) / n - f});
  }
  return d;
}

ManifoldSet small_manifold(std::size_t n, std::uint64_t seed) {
  return generate_manifold(reference_geometry(), n, seed);
}

}  // namespace

TEST(Projection, ZeroOffsetKeepsThePose) {
  const Pose6 p{1, -2, -5, 3, -4, 5};
  EXPECT_LT((apply_offset(p, {}).vec() - p.vec()).cwiseAbs().maxCoeff(), 1e-12);
}

TEST(Projection, OffsetsStayInBoundsAndAreUniform) {
  Rng rng(1);
  const Pose6 base{0.5, -0.3, -8.0, 1.0, -2.0, 3.0};
  constexpr std::size_t kDraws = 100000;
  std::array<std::vector<double>, 6> comps;
  for (auto& c : comps) c.reserve(kDraws);
  for (std::size_t i = 0; i < kDraws; ++i) {
    const Vec6 off = recovered_offset(base, perturb(base, rng)).vec();
    for (int k = 0; k < 6; ++k) {
      ASSERT_LE(std::abs(off[k]), 10.0 + 1e-9);
      comps[static_cast<std::size_t>(k)].push_back(off[k]);
    }
  }
  // Critical value for alpha = 0.01.
  const double critical = 1.628 / std::sqrt(static_cast<double>(kDraws));
  for (int k = 0; k < 6; ++k) EXPECT_LT(ks_uniform(comps[static_cast<std::size_t>(k)], -10.0, 10.0), critical) << k;
}

TEST(Projection, NearestNeighborConvenience) {
  ManifoldSet m;
  EXPECT_THROW(nearest_neighbor({}, m), Error);
  m.poses = {{0, 0, 0, 0, 0, 0}, {5, 0, 0, 0, 0, 0}};
  EXPECT_EQ(nearest_neighbor({4, 0, 0, 0, 0, 0}, m), m.poses[1]);
}

TEST(Projection, DatasetTargetsAreOptimal) {
  const ManifoldSet m = small_manifold(400, 2);
  const auto data = build_dataset(m, 300, 3);
  for (const auto& s : data) {
    const double d = dist_l2_r6(s.input, s.target);
    for (const Pose6& p : m.poses) ASSERT_LE(d, dist_l2_r6(s.input, p) + 1e-9);
  }
  const auto single = build_dataset(m, 1, 4);
  ASSERT_EQ(single.size(), 1u);
  EXPECT_EQ(single[0].target, nearest_neighbor(single[0].input, m));
}

TEST(Projection, DatasetIsDeterministicAcrossThreadCounts) {
  const ManifoldSet m = small_manifold(300, 5);
  const auto a = build_dataset(m, 500, 6, 1);
  const auto b = build_dataset(m, 500, 6, 3);
  const auto c = build_dataset(m, 500, 7, 1);
  ASSERT_EQ(a.size(), b.size());
  for (std::size_t i = 0; i < a.size(); ++i) {
    EXPECT_EQ(a[i].input, b[i].input);
    EXPECT_EQ(a[i].target, b[i].target);
  }
  EXPECT_NE(a[0].input, c[0].input);
}

TEST(Projection, ProjectionNeverWorseThanTheOffset) {
  const ManifoldSet m = small_manifold(1000, 8);
  Rng rng(9);
  double to_target = 0.0, offset_norm = 0.0;
  const NearestNeighborIndex index(m.poses);
  for (int i = 0; i < 2000; ++i) {
    const Pose6& source = m.poses[rng.index(m.size())];
    const Pose6 input = perturb(source, rng);
    to_target += index.nearest(input).distance;
    offset_norm += recovered_offset(source, input).vec().norm();
  }
  EXPECT_LE(to_target, offset_norm);
}

TEST(Projection, DatasetRejectsBadInput) {
  try {
    build_dataset(ManifoldSet{}, 10, 1);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::kEmptyManifold);
  }
  EXPECT_THROW(build_dataset(small_manifold(10, 1), 0, 1), Error);
}

TEST(Projection, ProjectorFlagsExtrapolation) {
  const ManifoldSet m = small_manifold(200, 10);
  MlpModel model = MlpModel::random(MlpModel::architecture(16, 2), 11);
  const Projector with(model, std::make_shared<NearestNeighborIndex>(m.poses));
  const Projector without(model);

  const Projection near = with.project(m.poses[0]);
  EXPECT_FALSE(near.extrapolated);
  EXPECT_EQ(near.neighbor_distance, 0.0);
  EXPECT_EQ(near.jacobian, mlp_input_jacobian(model, m.poses[0]));
  EXPECT_EQ(near.pose, mlp_forward(model, m.poses[0]));

  Pose6 far = m.poses[0];
  far.z += 40.0;
  EXPECT_TRUE(with.project(far).extrapolated);
  EXPECT_TRUE(std::isnan(without.project(far).neighbor_distance));
  EXPECT_FALSE(without.project(far).extrapolated);

  EXPECT_THROW(Projector(model, std::make_shared<NearestNeighborIndex>()), Error);
}
