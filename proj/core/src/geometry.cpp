#include "manifold_calib/geometry.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "manifold_calib/error.hpp"

namespace manifold_calib {

namespace {

constexpr std::array<std::array<int, 2>, 12> kBoxEdges = {{
    {0, 1}, {2, 3}, {4, 5}, {6, 7},  // along x
    {0, 2}, {1, 3}, {4, 6}, {5, 7},  // along y
    {0, 4}, {1, 5}, {2, 6}, {3, 7},  // along z
}};

double projected_radius(const OrientedBox& box, const Vec3& axis) {
  return box.half[0] * std::abs(axis.dot(box.rotation.col(0))) +
         box.half[1] * std::abs(axis.dot(box.rotation.col(1))) +
         box.half[2] * std::abs(axis.dot(box.rotation.col(2)));
}

// Largest gap along the 15 separating-axis candidates. Positive means the boxes
// are separated (and the value is a lower bound on their distance); otherwise
// its negation is the translational penetration depth.
double max_axis_gap(const OrientedBox& a, const OrientedBox& b) {
  const Vec3 delta = b.center - a.center;
  double best = -std::numeric_limits<double>::infinity();
  auto test = [&](const Vec3& axis) {
    const double gap = std::abs(axis.dot(delta)) - projected_radius(a, axis) - projected_radius(b, axis);
    best = std::max(best, gap);
  };
  for (int i = 0; i < 3; ++i) test(a.rotation.col(i));
  for (int i = 0; i < 3; ++i) test(b.rotation.col(i));
  for (int i = 0; i < 3; ++i) {
    for (int j = 0; j < 3; ++j) {
      const Vec3 axis = a.rotation.col(i).cross(b.rotation.col(j));
      const double norm = axis.norm();
      if (norm > 1e-9) test(axis / norm);
    }
  }
  return best;
}

double separated_distance(const OrientedBox& a, const OrientedBox& b) {
  const auto va = a.vertices();
  const auto vb = b.vertices();
  double best = std::numeric_limits<double>::infinity();
  for (const Vec3& v : va) best = std::min(best, point_box_distance(v, b));
  for (const Vec3& v : vb) best = std::min(best, point_box_distance(v, a));
  for (const auto& ea : kBoxEdges) {
    for (const auto& eb : kBoxEdges) {
      best = std::min(best, segment_distance(va[ea[0]], va[ea[1]], vb[eb[0]], vb[eb[1]]));
    }
  }
  return best;
}

OrientedBox aabb(const Vec3& lo, const Vec3& hi) {
  return {Mat3::Identity(), 0.5 * (lo + hi), 0.5 * (hi - lo)};
}

}  // namespace

void AssemblyGeometry::validate() const {
  const bool positive = peg_width > 0 && peg_length > 0 && hole_width > 0 && hole_depth > 0 &&
                        block_half_extent > hole_width && floor_thickness > 0;
  if (!positive || !(clearance() > 0.0)) {
    throw Error(ErrorCode::kValidationError,
                "assembly geometry needs positive sizes and hole_width > peg_width");
  }
}

AssemblyGeometry reference_geometry() { return AssemblyGeometry{}; }

std::array<Vec3, 8> OrientedBox::vertices() const {
  std::array<Vec3, 8> out;
  for (int k = 0; k < 8; ++k) {
    const Vec3 local((k & 1) ? half[0] : -half[0], (k & 2) ? half[1] : -half[1],
                     (k & 4) ? half[2] : -half[2]);
    out[static_cast<std::size_t>(k)] = center + rotation * local;
  }
  return out;
}

double point_box_distance(const Vec3& point, const OrientedBox& box) {
  const Vec3 local = box.rotation.transpose() * (point - box.center);
  const Vec3 outside = (local.cwiseAbs() - box.half).cwiseMax(0.0);
  return outside.norm();
}

double segment_distance(const Vec3& p0, const Vec3& p1, const Vec3& q0, const Vec3& q1) {
  const Vec3 d1 = p1 - p0;
  const Vec3 d2 = q1 - q0;
  const Vec3 r = p0 - q0;
  const double a = d1.squaredNorm();
  const double e = d2.squaredNorm();
  const double f = d2.dot(r);
  double s = 0.0;
  double t = 0.0;
  if (a <= 1e-18 && e <= 1e-18) return r.norm();
  if (a <= 1e-18) {
    t = std::clamp(f / e, 0.0, 1.0);
  } else {
    const double c = d1.dot(r);
    if (e <= 1e-18) {
      s = std::clamp(-c / a, 0.0, 1.0);
    } else {
      const double b = d1.dot(d2);
      const double denom = a * e - b * b;
      s = denom > 1e-18 ? std::clamp((b * f - c * e) / denom, 0.0, 1.0) : 0.0;
      t = (b * s + f) / e;
      if (t < 0.0) {
        t = 0.0;
        s = std::clamp(-c / a, 0.0, 1.0);
      } else if (t > 1.0) {
        t = 1.0;
        s = std::clamp((b - c) / a, 0.0, 1.0);
      }
    }
  }
  return ((p0 + d1 * s) - (q0 + d2 * t)).norm();
}

double box_signed_distance(const OrientedBox& a, const OrientedBox& b) {
  const double gap = max_axis_gap(a, b);
  if (gap > 0.0) return separated_distance(a, b);
  return gap;
}

OrientedBox peg_box(const AssemblyGeometry& geom, const Pose6& hole_T_peg) {
  const HomTransform t = pose_to_matrix(hole_T_peg);
  const double hw = 0.5 * geom.peg_width;
  const double hl = 0.5 * geom.peg_length;
  return {t.rotation(), t.rotation() * Vec3(0.0, 0.0, hl) + t.translation(), Vec3(hw, hw, hl)};
}

std::array<OrientedBox, 5> block_pieces(const AssemblyGeometry& geom) {
  const double h = 0.5 * geom.hole_width;
  const double b = geom.block_half_extent;
  const double top = 0.0;
  const double floor_top = -geom.hole_depth;
  const double bottom = -geom.hole_depth - geom.floor_thickness;
  return {aabb({h, -b, bottom}, {b, b, top}),
          aabb({-b, -b, bottom}, {-h, b, top}),
          aabb({-h, h, bottom}, {h, b, top}),
          aabb({-h, -b, bottom}, {h, -h, top}),
          aabb({-h, -h, bottom}, {h, h, floor_top})};
}

double clearance_fn(const AssemblyGeometry& geom, const Pose6& hole_T_peg) {
  const OrientedBox peg = peg_box(geom, hole_T_peg);
  const auto pieces = block_pieces(geom);
  std::array<double, 5> gaps{};
  for (std::size_t k = 0; k < pieces.size(); ++k) gaps[k] = max_axis_gap(peg, pieces[k]);

  double best = std::numeric_limits<double>::infinity();
  for (std::size_t k = 0; k < pieces.size(); ++k) {
    if (gaps[k] <= 0.0) {
      best = std::min(best, gaps[k]);
    } else if (gaps[k] < best) {  // the axis gap lower-bounds the true distance
      best = std::min(best, separated_distance(peg, pieces[k]));
    }
  }
  return best;
}

}  // namespace manifold_calib
