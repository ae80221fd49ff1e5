#include "manifold_calib/nn_index.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "manifold_calib/error.hpp"

namespace manifold_calib {

NeighborHit nearest_neighbor_scan(const Pose6& query, std::span<const Pose6> points) {
  if (points.empty()) throw Error(ErrorCode::kEmptyManifold, "nearest neighbor on an empty set");
  std::size_t best = 0;
  double best_d2 = squared_distance(query, points[0]);
  for (std::size_t i = 1; i < points.size(); ++i) {
    const double d2 = squared_distance(query, points[i]);
    if (d2 < best_d2) {
      best_d2 = d2;
      best = i;
    }
  }
  return {best, std::sqrt(best_d2)};
}

NearestNeighborIndex::NearestNeighborIndex(std::vector<Pose6> points, std::size_t leaf_size)
    : points_(std::move(points)), leaf_size_(std::max<std::size_t>(leaf_size, 1)) {
  coords_.reserve(points_.size());
  for (const Pose6& p : points_) coords_.push_back(p.vec());
  order_.resize(points_.size());
  for (std::size_t i = 0; i < order_.size(); ++i) order_[i] = i;
  if (!points_.empty()) build(0, points_.size());
}

int NearestNeighborIndex::build(std::size_t begin, std::size_t end) {
  const int id = static_cast<int>(nodes_.size());
  nodes_.push_back({});
  if (end - begin <= leaf_size_) {
    nodes_[id].begin = begin;
    nodes_[id].end = end;
    return id;
  }

  Vec6 lo = Vec6::Constant(std::numeric_limits<double>::infinity());
  Vec6 hi = -lo;
  for (std::size_t i = begin; i < end; ++i) {
    lo = lo.cwiseMin(coords_[order_[i]]);
    hi = hi.cwiseMax(coords_[order_[i]]);
  }
  Eigen::Index dim = 0;
  (hi - lo).maxCoeff(&dim);

  const std::size_t mid = begin + (end - begin) / 2;
  const auto first = order_.begin() + static_cast<std::ptrdiff_t>(begin);
  std::nth_element(first, order_.begin() + static_cast<std::ptrdiff_t>(mid),
                   order_.begin() + static_cast<std::ptrdiff_t>(end),
                   [&](std::size_t a, std::size_t b) {
                     const double va = coords_[a][dim], vb = coords_[b][dim];
                     return va < vb || (va == vb && a < b);
                   });
  const double split = coords_[order_[mid]][dim];
  const int left = build(begin, mid);
  const int right = build(mid, end);
  nodes_[id].split_dim = static_cast<int>(dim);
  nodes_[id].split_value = split;
  nodes_[id].left = left;
  nodes_[id].right = right;
  return id;
}

void NearestNeighborIndex::search(int node_id, const Vec6& q, const Pose6& query,
                                  NeighborHit& best, double& best_d2) const {
  const Node& node = nodes_[static_cast<std::size_t>(node_id)];
  if (node.split_dim < 0) {
    for (std::size_t i = node.begin; i < node.end; ++i) {
      const std::size_t idx = order_[i];
      const double d2 = squared_distance(query, points_[idx]);
      if (d2 < best_d2 || (d2 == best_d2 && idx < best.index)) {
        best_d2 = d2;
        best.index = idx;
      }
    }
    return;
  }
  // Left holds values <= split, right holds values >= split.
  const double diff = q[node.split_dim] - node.split_value;
  const int near = diff < 0.0 ? node.left : node.right;
  const int far = diff < 0.0 ? node.right : node.left;
  search(near, q, query, best, best_d2);
  // Strict comparison keeps equal-distance candidates reachable for the tie-break.
  if (!(diff * diff > best_d2)) search(far, q, query, best, best_d2);
}

NeighborHit NearestNeighborIndex::nearest(const Pose6& query) const {
  if (points_.empty()) throw Error(ErrorCode::kEmptyManifold, "nearest neighbor on an empty set");
  NeighborHit best{std::numeric_limits<std::size_t>::max(), 0.0};
  double best_d2 = std::numeric_limits<double>::infinity();
  search(0, query.vec(), query, best, best_d2);
  best.distance = std::sqrt(best_d2);
  return best;
}

}  // namespace manifold_calib
