#pragma once

// Square peg / square pocket geometry and the signed clearance between them.
//
// Hole frame: origin at the center of the pocket opening, +z out of the block.
// The block fills z <= 0 except for the pocket |x|,|y| <= hole_width/2,
// -hole_depth <= z <= 0. Peg frame: origin at the center of the peg tip face,
// +z along the peg body toward the flange.

#include <array>

#include "manifold_calib/se3.hpp"

namespace manifold_calib {

struct AssemblyGeometry {
  double peg_width = 20.0;     // mm
  double peg_length = 60.0;    // mm
  double hole_width = 21.0;    // mm
  double hole_depth = 20.0;    // mm
  double block_half_extent = 100.0;
  double floor_thickness = 20.0;

  double clearance() const { return hole_width - peg_width; }
  /// Throws Error(kValidationError) unless every size is positive and clearance > 0.
  void validate() const;
};

/// 20 mm peg in a 21 mm pocket, 20 mm deep (1.0 mm clearance).
AssemblyGeometry reference_geometry();

struct OrientedBox {
  Mat3 rotation = Mat3::Identity();
  Vec3 center = Vec3::Zero();
  Vec3 half = Vec3::Zero();

  std::array<Vec3, 8> vertices() const;
};

/// Exact signed distance between two boxes: the Euclidean gap when separated,
/// minus the translational penetration depth when overlapping.
double box_signed_distance(const OrientedBox& a, const OrientedBox& b);

/// Closest distance between segments [p0,p1] and [q0,q1].
double segment_distance(const Vec3& p0, const Vec3& p1, const Vec3& q0, const Vec3& q1);

/// Distance from a point to a solid box (0 inside).
double point_box_distance(const Vec3& point, const OrientedBox& box);

/// Peg solid in the hole frame for the given peg pose.
OrientedBox peg_box(const AssemblyGeometry& geom, const Pose6& hole_T_peg);

/// Convex, non-overlapping decomposition of the block: four walls and the floor.
std::array<OrientedBox, 5> block_pieces(const AssemblyGeometry& geom);

/// Signed clearance (mm) between peg and block; 0 at contact, negative when
/// interpenetrating.
double clearance_fn(const AssemblyGeometry& geom, const Pose6& hole_T_peg);

}  // namespace manifold_calib
