#include "manifold_calib/projection.hpp"

#include <cmath>
#include <limits>

#include <spdlog/spdlog.h>

#include "manifold_calib/error.hpp"
#include "manifold_calib/parallel.hpp"

namespace manifold_calib {

Pose6 apply_offset(const Pose6& pose, const Pose6& offset) {
  return matrix_to_pose(pose_to_matrix(pose) * pose_to_matrix(offset));
}

Pose6 perturb(const Pose6& manifold_pose, Rng& rng, const PerturbationBounds& bounds) {
  Pose6 offset;
  offset.x = rng.uniform(-bounds.translation, bounds.translation);
  offset.y = rng.uniform(-bounds.translation, bounds.translation);
  offset.z = rng.uniform(-bounds.translation, bounds.translation);
  offset.alpha = rng.uniform(-bounds.rotation, bounds.rotation);
  offset.beta = rng.uniform(-bounds.rotation, bounds.rotation);
  offset.gamma = rng.uniform(-bounds.rotation, bounds.rotation);
  return apply_offset(manifold_pose, offset);
}

Pose6 nearest_neighbor(const Pose6& query, const ManifoldSet& manifold) {
  return manifold.poses[nearest_neighbor_scan(query, manifold.poses).index];
}

std::vector<ProjectionSample> build_dataset(const ManifoldSet& manifold, std::size_t size,
                                            std::uint64_t seed, unsigned threads,
                                            const PerturbationBounds& bounds) {
  if (manifold.empty()) throw Error(ErrorCode::kEmptyManifold, "cannot build a dataset from an empty manifold");
  if (size == 0) throw Error(ErrorCode::kValidationError, "dataset size must be at least 1");

  const NearestNeighborIndex index(manifold.poses);
  std::vector<ProjectionSample> samples(size);
  parallel_for(size, threads, [&](std::size_t i) {
    Rng rng(stream_seed(seed, i));
    const Pose6& source = manifold.poses[rng.index(manifold.size())];
    samples[i].input = perturb(source, rng, bounds);
    samples[i].target = index.point(index.nearest(samples[i].input).index);
  });
  return samples;
}

Vec6 mirror_signs() { return (Vec6() << 1.0, -1.0, 1.0, -1.0, 1.0, -1.0).finished(); }

Pose6 mirror_pose(const Pose6& pose) { return Pose6::from_vec(mirror_signs().cwiseProduct(pose.vec())); }

Projector::Projector(MlpModel model, std::shared_ptr<const NearestNeighborIndex> manifold, bool mirror_symmetric)
    : model_(std::move(model)), manifold_(std::move(manifold)), mirror_symmetric_(mirror_symmetric) {
  model_.validate();
  if (manifold_ && manifold_->empty()) {
    throw Error(ErrorCode::kEmptyManifold, "projector attached to an empty manifold");
  }
}

Projection Projector::project(const Pose6& pose) const {
  Projection out;
  out.pose = mlp_forward(model_, pose);
  out.jacobian = mlp_input_jacobian(model_, pose);
  if (mirror_symmetric_) {
    const Vec6 s = mirror_signs();
    const Pose6 mirrored = mirror_pose(pose);
    out.pose = Pose6::from_vec(0.5 * (out.pose.vec() + s.cwiseProduct(mlp_forward(model_, mirrored).vec())));
    out.jacobian = 0.5 * (out.jacobian + s.asDiagonal() * mlp_input_jacobian(model_, mirrored) * s.asDiagonal());
  }
  out.neighbor_distance = std::numeric_limits<double>::quiet_NaN();
  if (manifold_) {
    out.neighbor_distance = manifold_->nearest(pose).distance;
    out.extrapolated = out.neighbor_distance > kExtrapolationDistance;
    if (out.extrapolated) {
      spdlog::warn("projection input is {:.3f} units from the manifold; model is extrapolating",
                   out.neighbor_distance);
    }
  }
  return out;
}

}  // namespace manifold_calib
