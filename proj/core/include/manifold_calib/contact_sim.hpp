#pragma once

// Synthetic peg-in-hole contact data: contact pose sampling, the contact
// manifold set, damped least-squares IK and biased joint observations.

#include <cstdint>
#include <vector>

#include "manifold_calib/geometry.hpp"
#include "manifold_calib/kinematics.hpp"
#include "manifold_calib/rng.hpp"

namespace manifold_calib {

/// |clearance_fn| bound for a pose to count as "in contact" (mm).
inline constexpr double kContactTolerance = 1e-4;

enum class ContactMode { kRim, kWall, kTilted };

/// Extents of the pose families each contact mode draws from (mm / deg).
struct SamplerConfig {
  double rim_lateral = 3.0;   // peg offset range over the block top
  double rim_tilt = 3.0;      // |alpha|, |beta| bound for rim contacts
  double rim_yaw = 3.0;
  double wall_tilt = 0.5;
  double wall_yaw = 1.0;
  double bottom_fraction = 0.2;  // share of wall-mode draws approaching the floor
  double tilted_depth_min = 8.0;  // jammed two-point contacts need a deep insertion
  double tilted_depth_max = 15.0;
};

/// Draws one contact pose by scanning a random approach ray from a free pose
/// until the first penetrating pose, then bisecting to |clearance| <= 1e-4 mm.
/// Throws Error(kSamplingFailure) after 100 rejected seeds.
Pose6 sample_contact_pose(const AssemblyGeometry& geom, Rng& rng, ContactMode mode,
                          const SamplerConfig& config = {});

/// Mode used for the i-th stratified draw (rim/wall/rim/wall/tilted cycle).
ContactMode stratified_mode(std::size_t index);

struct ManifoldSet {
  std::vector<Pose6> poses;
  std::size_t size() const { return poses.size(); }
  bool empty() const { return poses.empty(); }
};

/// N deduplicated contact poses, deterministic in `seed`.
ManifoldSet generate_manifold(const AssemblyGeometry& geom, std::size_t n, std::uint64_t seed,
                              const SamplerConfig& config = {});

struct IkOptions {
  double damping = 1.0;
  int max_iterations = 200;
  double position_tolerance = 1e-6;  // mm
  double angle_tolerance = 1e-6;     // deg
  double max_step = 10.0;            // deg per joint per iteration
};

struct IkResult {
  JointVector q;
  int iterations = 0;
};

/// Damped least-squares IK for the flange pose. `params` selects the link
/// strain (biases are ignored: the solution is the true joint vector q*).
/// Throws Error(kIkDivergence) when the residual tolerance is not reached.
IkResult inverse_kinematics(const KinematicChain& chain, const HomTransform& target,
                            const JointVector& q_seed, const KinematicParams& params = {},
                            const IkOptions& options = {});

/// Fixed frames of the cell: hole in the robot base frame, peg on the flange.
struct SceneFrames {
  HomTransform base_T_hole;
  HomTransform ee_T_peg;
  JointVector home;  // IK seed for the first observation
};

/// Hole 550 mm in front of the base, 150 mm up; peg tip 60 mm out of the
/// flange pointing along -z_flange.
SceneFrames reference_frames(const AssemblyGeometry& geom = reference_geometry());

struct ContactObservation {
  JointVector q;      // biased measurement q = q* + b (deg)
  Pose6 contact_pose; // ground-truth hole_T_peg; not part of the serialized form
};

struct SimulationOptions {
  IkOptions ik;
  SamplerConfig sampler;
  /// Uniform jitter added to the reused IK seed, spreading the redundant
  /// self-motion across observations (0 = plain seed reuse).
  double seed_jitter_deg = 0.0;
};

/// m biased joint observations at sampled contacts. Deterministic in `seed`.
std::vector<ContactObservation> simulate_observations(
    const KinematicChain& chain, const AssemblyGeometry& geom, const SceneFrames& frames,
    const KinematicParams& params_true, std::size_t m, std::uint64_t seed,
    const SimulationOptions& options = {});

/// Flange target for a hole-frame peg pose.
HomTransform flange_target(const SceneFrames& frames, const Pose6& hole_T_peg);

}  // namespace manifold_calib
