#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "manifold_calib/se3.hpp"

namespace manifold_calib {

struct NeighborHit {
  std::size_t index = 0;
  double distance = 0.0;
};

/// Exact linear-scan argmin; ties go to the lowest index.
/// Throws Error(kEmptyManifold) on an empty set.
NeighborHit nearest_neighbor_scan(const Pose6& query, std::span<const Pose6> points);

/// Exact nearest neighbor over R^6 using a k-d tree. Returns the same index as
/// nearest_neighbor_scan for every query, including the lowest-index tie-break.
class NearestNeighborIndex {
 public:
  NearestNeighborIndex() = default;
  explicit NearestNeighborIndex(std::vector<Pose6> points, std::size_t leaf_size = 8);

  NeighborHit nearest(const Pose6& query) const;

  std::size_t size() const { return points_.size(); }
  bool empty() const { return points_.empty(); }
  const Pose6& point(std::size_t i) const { return points_[i]; }
  const std::vector<Pose6>& points() const { return points_; }

 private:
  struct Node {
    int split_dim = -1;  // -1 marks a leaf
    double split_value = 0.0;
    std::size_t begin = 0, end = 0;  // leaf range into order_
    int left = -1, right = -1;
  };

  int build(std::size_t begin, std::size_t end);
  void search(int node, const Vec6& q, const Pose6& query, NeighborHit& best, double& best_d2) const;

  std::vector<Pose6> points_;
  std::vector<Vec6> coords_;
  std::vector<std::size_t> order_;
  std::vector<Node> nodes_;
  std::size_t leaf_size_ = 8;
};

}  // namespace manifold_calib
