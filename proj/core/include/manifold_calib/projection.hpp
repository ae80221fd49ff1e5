#pragma once

// Training data for the learned projection onto the contact manifold and the
// projector used at calibration time.

#include <cstdint>
#include <memory>
#include <vector>

#include "manifold_calib/contact_sim.hpp"
#include "manifold_calib/mlp.hpp"
#include "manifold_calib/nn_index.hpp"
#include "manifold_calib/rng.hpp"

namespace manifold_calib {

/// NN distance beyond which a query is treated as outside the trained region.
inline constexpr double kExtrapolationDistance = 15.0;

struct PerturbationBounds {
  double translation = 10.0;  // mm, per component
  double rotation = 10.0;     // deg, per Euler component
};

/// Component signs of the reflection through the hole x-z plane,
/// (x, -y, z, -alpha, beta, -gamma). A square peg in a centred square pocket is
/// symmetric under it, so the exact projection commutes with it.
Vec6 mirror_signs();
Pose6 mirror_pose(const Pose6& pose);

/// Right-multiplies `pose` by a transform built from `offset` (as a Pose6).
Pose6 apply_offset(const Pose6& pose, const Pose6& offset);

/// Draws the offset components uniformly within `bounds` and applies them.
Pose6 perturb(const Pose6& manifold_pose, Rng& rng, const PerturbationBounds& bounds = {});

/// Exact nearest manifold pose (lowest index on ties).
Pose6 nearest_neighbor(const Pose6& query, const ManifoldSet& manifold);

/// `size` perturbed manifold poses labeled with their exact nearest neighbor.
/// Deterministic in `seed` regardless of `threads`.
std::vector<ProjectionSample> build_dataset(const ManifoldSet& manifold, std::size_t size,
                                            std::uint64_t seed, unsigned threads = 1,
                                            const PerturbationBounds& bounds = {});

struct Projection {
  Pose6 pose;
  Eigen::Matrix<double, 6, 6> jacobian = Eigen::Matrix<double, 6, 6>::Zero();  // d out / d in
  double neighbor_distance = 0.0;  // NaN when no manifold is attached
  bool extrapolated = false;
};

/// Learned projection with optional extrapolation checks against the manifold
/// it was trained on. With `mirror_symmetric` the network is averaged with its
/// mirror image, F_s(p) = (F(p) + S F(S p)) / 2, which is exactly equivariant.
class Projector {
 public:
  explicit Projector(MlpModel model, std::shared_ptr<const NearestNeighborIndex> manifold = nullptr,
                     bool mirror_symmetric = false);

  const MlpModel& model() const { return model_; }
  bool has_manifold() const { return manifold_ != nullptr; }
  bool mirror_symmetric() const { return mirror_symmetric_; }

  /// Logs a warning (non-fatal) for inputs farther than 15 units from the manifold.
  Projection project(const Pose6& pose) const;

 private:
  MlpModel model_;
  std::shared_ptr<const NearestNeighborIndex> manifold_;
  bool mirror_symmetric_ = false;
};

}  // namespace manifold_calib
