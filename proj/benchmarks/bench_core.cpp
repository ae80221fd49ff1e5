#include <benchmark/benchmark.h>

#include "manifold_calib/calibration.hpp"
#include "manifold_calib/contact_sim.hpp"
#include "manifold_calib/geometry.hpp"
#include "manifold_calib/kinematics.hpp"
#include "manifold_calib/mlp.hpp"
#include "manifold_calib/nn_index.hpp"
#include "manifold_calib/projection.hpp"

using namespace manifold_calib;

namespace {

JointVector iiwa_posture() {
  JointVector q(7);
  q << 10.0, 45.0, -5.0, -95.0, 3.0, 40.0, 12.0;
  return q;
}

KinematicParams sample_params() {
  KinematicParams p = KinematicParams::zero(7);
  p.r = 0.02;
  p.b << 1.0, -2.0, 0.5, 3.0, -1.5, 2.0, -0.5;
  return p;
}

const ManifoldSet& manifold_20k() {
  static const ManifoldSet m = generate_manifold(reference_geometry(), 20000, 1);
  return m;
}

}  // namespace

static void BM_ForwardKinematics(benchmark::State& state) {
  const KinematicChain chain = reference_chain();
  const JointVector q = iiwa_posture();
  const KinematicParams p = sample_params();
  for (auto _ : state) benchmark::DoNotOptimize(forward_kinematics(chain, q, p));
}
BENCHMARK(BM_ForwardKinematics);

static void BM_FkGradient(benchmark::State& state) {
  const KinematicChain chain = reference_chain();
  const JointVector q = iiwa_posture();
  const KinematicParams p = sample_params();
  for (auto _ : state) benchmark::DoNotOptimize(fk_gradient(chain, q, p));
}
BENCHMARK(BM_FkGradient);

static void BM_ClearanceFn(benchmark::State& state) {
  const AssemblyGeometry g = reference_geometry();
  const Pose6 p{0.3, -0.2, -8.0, 1.5, -0.7, 2.0};
  for (auto _ : state) benchmark::DoNotOptimize(clearance_fn(g, p));
}
BENCHMARK(BM_ClearanceFn);

static void BM_NearestNeighborKdTree(benchmark::State& state) {
  const ManifoldSet& m = manifold_20k();
  const NearestNeighborIndex index(m.poses);
  Rng rng(2);
  for (auto _ : state) benchmark::DoNotOptimize(index.nearest(perturb(m.poses[rng.index(m.size())], rng)));
}
BENCHMARK(BM_NearestNeighborKdTree);

static void BM_NearestNeighborLinearScan(benchmark::State& state) {
  const ManifoldSet& m = manifold_20k();
  Rng rng(2);
  for (auto _ : state) benchmark::DoNotOptimize(nearest_neighbor(perturb(m.poses[rng.index(m.size())], rng), m));
}
BENCHMARK(BM_NearestNeighborLinearScan);

static void BM_MlpForward(benchmark::State& state) {
  const MlpModel model = MlpModel::random(MlpModel::architecture(static_cast<int>(state.range(0)), 4), 3);
  const Pose6 x{0.3, -0.2, -8.0, 1.5, -0.7, 2.0};
  for (auto _ : state) benchmark::DoNotOptimize(mlp_forward(model, x));
}
BENCHMARK(BM_MlpForward)->Arg(256)->Arg(1024);

static void BM_MlpInputJacobian(benchmark::State& state) {
  const MlpModel model = MlpModel::random(MlpModel::architecture(256, 4), 3);
  const Pose6 x{0.3, -0.2, -8.0, 1.5, -0.7, 2.0};
  for (auto _ : state) benchmark::DoNotOptimize(mlp_input_jacobian(model, x));
}
BENCHMARK(BM_MlpInputJacobian);

static void BM_CalibrationLossBatch(benchmark::State& state) {
  const AssemblyGeometry g = reference_geometry();
  const SceneFrames frames = reference_frames(g);
  SimulationOptions sim;
  sim.seed_jitter_deg = 20.0;
  CalibrationProblem problem{reference_chain(), frames.base_T_hole, frames.ee_T_peg,
                             simulate_observations(reference_chain(), g, frames, sample_params(),
                                                   static_cast<std::size_t>(state.range(0)), 4, sim),
                             MlpModel::random(MlpModel::architecture(256, 4), 5), nullptr};
  const KinematicParams at = KinematicParams::zero(7);
  for (auto _ : state) benchmark::DoNotOptimize(calibration_loss(problem, at));
  state.SetItemsProcessed(state.iterations() * state.range(0));
}
BENCHMARK(BM_CalibrationLossBatch)->Arg(3000)->Unit(benchmark::kMillisecond);

BENCHMARK_MAIN();
