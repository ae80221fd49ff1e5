#include "manifold_calib/contact_sim.hpp"

#include <algorithm>
#include <cmath>
#include <optional>
#include <string>

#include "manifold_calib/error.hpp"

namespace manifold_calib {

namespace {

constexpr int kMaxRejectedSeeds = 100;
constexpr int kMaxBisectionSteps = 64;
constexpr double kMaxPitch = 30.0;
constexpr double kMinDepth = -5.0;

struct Ray {
  Vec6 anchor;
  Vec6 direction;
  double length = 0.0;
  double step = 0.0;
};

// First contact along the ray, or nullopt when the seed is unusable.
std::optional<Pose6> first_contact(const AssemblyGeometry& geom, const Ray& ray) {
  auto at = [&](double t) { return Pose6::from_vec(ray.anchor + t * ray.direction); };
  if (clearance_fn(geom, at(0.0)) <= kContactTolerance) return std::nullopt;

  const int steps = static_cast<int>(std::ceil(ray.length / ray.step));
  double lo = 0.0;
  double hi = -1.0;
  for (int k = 1; k <= steps; ++k) {
    const double t = ray.step * k;
    const double c = clearance_fn(geom, at(t));
    if (std::abs(c) <= kContactTolerance) return at(t);
    if (c < 0.0) {
      hi = t;
      break;
    }
    lo = t;
  }
  if (hi < 0.0) return std::nullopt;

  for (int i = 0; i < kMaxBisectionSteps; ++i) {
    const double mid = 0.5 * (lo + hi);
    const double c = clearance_fn(geom, at(mid));
    if (std::abs(c) <= kContactTolerance) return at(mid);
    (c > 0.0 ? lo : hi) = mid;
  }
  throw Error(ErrorCode::kSamplingFailure, "contact bisection did not converge in 64 steps");
}

Vec6 normalized(Vec6 v) { return v / v.norm(); }

Ray rim_ray(const AssemblyGeometry& geom, Rng& rng, const SamplerConfig& cfg) {
  const double half_clearance = 0.5 * geom.clearance();
  double x = 0.0, y = 0.0;
  do {
    x = rng.uniform(-cfg.rim_lateral, cfg.rim_lateral);
    y = rng.uniform(-cfg.rim_lateral, cfg.rim_lateral);
  } while (std::max(std::abs(x), std::abs(y)) <= half_clearance);
  Vec6 anchor;
  anchor << x, y, 4.0, rng.uniform(-cfg.rim_tilt, cfg.rim_tilt),
      rng.uniform(-cfg.rim_tilt, cfg.rim_tilt), rng.uniform(-cfg.rim_yaw, cfg.rim_yaw);
  Vec6 dir;
  dir << rng.uniform(-0.15, 0.15), rng.uniform(-0.15, 0.15), -1.0, rng.uniform(-0.1, 0.1),
      rng.uniform(-0.1, 0.1), rng.uniform(-0.1, 0.1);
  return {anchor, normalized(dir), 12.0, 0.25};
}

Ray wall_ray(const AssemblyGeometry& geom, Rng& rng, const SamplerConfig& cfg) {
  const bool toward_floor = rng.uniform() < cfg.bottom_fraction;
  const double depth = toward_floor ? rng.uniform(geom.hole_depth - 3.0, geom.hole_depth - 0.3)
                                    : rng.uniform(0.5, geom.hole_depth - 0.5);
  Vec6 anchor;
  anchor << rng.uniform(-0.1, 0.1), rng.uniform(-0.1, 0.1), -depth,
      rng.uniform(-cfg.wall_tilt, cfg.wall_tilt), rng.uniform(-cfg.wall_tilt, cfg.wall_tilt),
      rng.uniform(-cfg.wall_yaw, cfg.wall_yaw);
  const double phi = rng.uniform(0.0, 2.0 * kPi);
  const double lateral = toward_floor ? 0.3 : 1.0;
  const double down = toward_floor ? 1.0 : rng.uniform(0.0, 0.3);
  Vec6 dir;
  dir << lateral * std::cos(phi), lateral * std::sin(phi), -down, rng.uniform(-0.05, 0.05),
      rng.uniform(-0.05, 0.05), rng.uniform(-0.05, 0.05);
  return {anchor, normalized(dir), 4.0, 0.05};
}

Ray tilted_ray(const AssemblyGeometry&, Rng& rng, const SamplerConfig& cfg) {
  const double depth = rng.uniform(cfg.tilted_depth_min, cfg.tilted_depth_max);
  Vec6 anchor;
  anchor << rng.uniform(-0.2, 0.2), rng.uniform(-0.2, 0.2), -depth, 0.0, 0.0,
      rng.uniform(-cfg.wall_yaw, cfg.wall_yaw);
  const double psi = rng.uniform(0.0, 2.0 * kPi);
  Vec6 dir;
  dir << rng.uniform(-0.1, 0.1), rng.uniform(-0.1, 0.1), 0.0, std::cos(psi), std::sin(psi),
      rng.uniform(-0.05, 0.05);
  return {anchor, normalized(dir), 25.0, 0.1};
}

bool within_bounds(const AssemblyGeometry& geom, const Pose6& p) {
  const double depth = -p.z;
  return std::abs(p.beta) < kMaxPitch && depth >= kMinDepth && depth <= geom.hole_depth;
}

double wrap_deg(double a) { return std::remainder(a, 360.0); }

bool ik_converged(const HomTransform& current, const HomTransform& target, const IkOptions& o) {
  const Pose6 c = matrix_to_pose(current);
  const Pose6 t = matrix_to_pose(target);
  const bool pos = std::abs(c.x - t.x) < o.position_tolerance &&
                   std::abs(c.y - t.y) < o.position_tolerance &&
                   std::abs(c.z - t.z) < o.position_tolerance;
  const bool ang = std::abs(wrap_deg(c.alpha - t.alpha)) < o.angle_tolerance &&
                   std::abs(wrap_deg(c.beta - t.beta)) < o.angle_tolerance &&
                   std::abs(wrap_deg(c.gamma - t.gamma)) < o.angle_tolerance;
  return pos && ang;
}

Vec3 vee(const Mat3& m) { return {m(2, 1), m(0, 2), m(1, 0)}; }

}  // namespace

ContactMode stratified_mode(std::size_t index) {
  static constexpr std::array<ContactMode, 5> kCycle = {
      ContactMode::kRim, ContactMode::kWall, ContactMode::kRim, ContactMode::kWall,
      ContactMode::kTilted};
  return kCycle[index % kCycle.size()];
}

Pose6 sample_contact_pose(const AssemblyGeometry& geom, Rng& rng, ContactMode mode,
                          const SamplerConfig& config) {
  for (int attempt = 0; attempt < kMaxRejectedSeeds; ++attempt) {
    Ray ray;
    switch (mode) {
      case ContactMode::kRim: ray = rim_ray(geom, rng, config); break;
      case ContactMode::kWall: ray = wall_ray(geom, rng, config); break;
      case ContactMode::kTilted: ray = tilted_ray(geom, rng, config); break;
    }
    const std::optional<Pose6> pose = first_contact(geom, ray);
    if (pose && within_bounds(geom, *pose)) return *pose;
  }
  throw Error(ErrorCode::kSamplingFailure, "no contact pose after 100 rejected seeds");
}

ManifoldSet generate_manifold(const AssemblyGeometry& geom, std::size_t n, std::uint64_t seed,
                              const SamplerConfig& config) {
  if (n == 0) throw Error(ErrorCode::kValidationError, "manifold size must be >= 1");
  geom.validate();

  ManifoldSet out;
  out.poses.reserve(n);
  std::size_t stream = 0;
  while (out.poses.size() < n) {
    const std::size_t need = n - out.poses.size();
    for (std::size_t k = 0; k < need; ++k, ++stream) {
      Rng rng(stream_seed(seed, stream));
      out.poses.push_back(sample_contact_pose(geom, rng, stratified_mode(stream), config));
    }

    // Drop near-duplicates (L2 < 1e-6). Any such pair also has |dx| < 1e-6,
    // so a window scan over poses sorted by x finds all of them.
    std::vector<std::size_t> order(out.poses.size());
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
    std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
      return out.poses[a].x < out.poses[b].x || (out.poses[a].x == out.poses[b].x && a < b);
    });
    std::vector<bool> drop(out.poses.size(), false);
    for (std::size_t i = 0; i < order.size(); ++i) {
      if (drop[order[i]]) continue;
      for (std::size_t j = i + 1; j < order.size(); ++j) {
        const Pose6& a = out.poses[order[i]];
        const Pose6& b = out.poses[order[j]];
        if (b.x - a.x >= 1e-6) break;
        if (dist_l2_r6(a, b) < 1e-6) drop[std::max(order[i], order[j])] = true;
      }
    }
    std::vector<Pose6> kept;
    kept.reserve(out.poses.size());
    for (std::size_t i = 0; i < out.poses.size(); ++i) {
      if (!drop[i]) kept.push_back(out.poses[i]);
    }
    out.poses = std::move(kept);
  }
  return out;
}

IkResult inverse_kinematics(const KinematicChain& chain, const HomTransform& target,
                            const JointVector& q_seed, const KinematicParams& params,
                            const IkOptions& options) {
  const auto n = static_cast<Eigen::Index>(chain.size());
  if (q_seed.size() != n) {
    throw Error(ErrorCode::kDimensionMismatch, "IK seed length does not match joint count");
  }
  const KinematicParams strain_only{params.r, Eigen::VectorXd::Zero(n)};
  JointVector q = q_seed;

  for (int iter = 0; iter <= options.max_iterations; ++iter) {
    const FkDerivatives fk = forward_kinematics_derivatives(chain, q, strain_only);
    if (ik_converged(fk.transform, target, options)) return {q, iter};
    if (iter == options.max_iterations) break;

    const Mat3 r = fk.transform.rotation();
    Vec6 err;
    err.head<3>() = target.translation() - fk.transform.translation();
    err.tail<3>() = rotation_error_deg(target.rotation(), r);

    // Geometric Jacobian in mm/deg and deg/deg; dT/dq_i = -dT/db_i.
    Eigen::Matrix<double, 6, Eigen::Dynamic> jac(6, n);
    for (Eigen::Index i = 0; i < n; ++i) {
      const Mat4 d = -fk.d_transform[static_cast<std::size_t>(i) + 1];
      jac.block<3, 1>(0, i) = d.topRightCorner<3, 1>();
      jac.block<3, 1>(3, i) = vee(Mat3(d.topLeftCorner<3, 3>() * r.transpose())) * kRadToDeg;
    }
    const Eigen::Matrix<double, 6, 6> jjt =
        jac * jac.transpose() + options.damping * options.damping * Eigen::Matrix<double, 6, 6>::Identity();
    Eigen::VectorXd dq = jac.transpose() * jjt.ldlt().solve(err);
    const double biggest = dq.cwiseAbs().maxCoeff();
    if (!std::isfinite(biggest)) break;
    if (biggest > options.max_step) dq *= options.max_step / biggest;
    q += dq;
  }
  throw Error(ErrorCode::kIkDivergence, "IK residual not met within " +
                                            std::to_string(options.max_iterations) + " iterations");
}

SceneFrames reference_frames(const AssemblyGeometry& geom) {
  SceneFrames f;
  f.base_T_hole = pose_to_matrix({550.0, 0.0, 150.0, 0.0, 0.0, 0.0});
  f.ee_T_peg = pose_to_matrix({0.0, 0.0, geom.peg_length, 180.0, 0.0, 180.0});
  f.home = JointVector(7);
  f.home << 0.0, 45.0, 0.0, -95.0, 0.0, 40.0, 0.0;
  return f;
}

HomTransform flange_target(const SceneFrames& frames, const Pose6& hole_T_peg) {
  return frames.base_T_hole * pose_to_matrix(hole_T_peg) * inverse(frames.ee_T_peg);
}

std::vector<ContactObservation> simulate_observations(
    const KinematicChain& chain, const AssemblyGeometry& geom, const SceneFrames& frames,
    const KinematicParams& params_true, std::size_t m, std::uint64_t seed,
    const SimulationOptions& options) {
  if (m == 0) throw Error(ErrorCode::kValidationError, "observation count must be >= 1");
  params_true.validate(chain.size());
  if (static_cast<std::size_t>(frames.home.size()) != chain.size()) {
    throw Error(ErrorCode::kDimensionMismatch, "home posture length does not match joint count");
  }

  std::vector<ContactObservation> out;
  out.reserve(m);
  JointVector previous = frames.home;
  const std::size_t max_attempts = m * 10;
  for (std::size_t attempt = 0; out.size() < m; ++attempt) {
    if (attempt >= max_attempts) {
      throw Error(ErrorCode::kIkDivergence,
                  "gave up after " + std::to_string(max_attempts) + " observation attempts");
    }
    Rng rng(stream_seed(seed, attempt));
    const Pose6 contact = sample_contact_pose(geom, rng, stratified_mode(attempt), options.sampler);
    JointVector seed_q = previous;
    if (options.seed_jitter_deg > 0.0) {
      for (Eigen::Index i = 0; i < seed_q.size(); ++i) {
        seed_q[i] += rng.uniform(-options.seed_jitter_deg, options.seed_jitter_deg);
      }
    }
    try {
      const IkResult ik =
          inverse_kinematics(chain, flange_target(frames, contact), seed_q, params_true, options.ik);
      previous = ik.q;
      out.push_back({ik.q + params_true.b, contact});
    } catch (const Error& e) {
      if (e.code() != ErrorCode::kIkDivergence) throw;
      previous = frames.home;
    }
  }
  return out;
}

}  // namespace manifold_calib
