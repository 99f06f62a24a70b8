#pragma once

#include "ofu/camera.hpp"

#include <variant>

namespace ofu {

// ---------------------------------------------------------------------------
// Watertight procedural scenes as unions of rigidly-posed primitives with
// exact signed distance functions.
// ---------------------------------------------------------------------------

enum class PrimitiveKind : int { Sphere = 0, Box = 1, Cylinder = 2, Capsule = 3 };

struct Primitive {
  PrimitiveKind kind = PrimitiveKind::Sphere;
  Mat3d rotation = Mat3d::Identity();  // local -> world
  Vec3d center = Vec3d::Zero();
  Vec3d size = Vec3d::Ones();  // sphere/capsule: x=radius (capsule: y=half length);
                               // box: half extents; cylinder: x=radius, y=half height

  double signed_distance(const Vec3d& p_world) const {
    const Vec3d p = rotation.transpose() * (p_world - center);
    switch (kind) {
      case PrimitiveKind::Sphere:
        return p.norm() - size.x();
      case PrimitiveKind::Box: {
        const Vec3d q = p.cwiseAbs() - size;
        const Vec3d outside = q.cwiseMax(0.0);
        return outside.norm() + std::min(q.maxCoeff(), 0.0);
      }
      case PrimitiveKind::Cylinder: {
        const double dr = std::hypot(p.x(), p.y()) - size.x();
        const double dz = std::abs(p.z()) - size.y();
        const double ox = std::max(dr, 0.0);
        const double oz = std::max(dz, 0.0);
        return std::min(std::max(dr, dz), 0.0) + std::hypot(ox, oz);
      }
      case PrimitiveKind::Capsule: {
        const double h = size.y();
        const double z = std::clamp(p.z(), -h, h);
        return Vec3d(p.x(), p.y(), p.z() - z).norm() - size.x();
      }
    }
    return 0.0;
  }

  /// Loose world-space bounding radius around the primitive center.
  double bounding_radius() const {
    switch (kind) {
      case PrimitiveKind::Sphere:
        return size.x();
      case PrimitiveKind::Box:
        return size.norm();
      case PrimitiveKind::Cylinder:
        return std::hypot(size.x(), size.y());
      case PrimitiveKind::Capsule:
        return size.x() + size.y();
    }
    return 0.0;
  }
};

/// Union of primitives. The distance is exact outside the union (the minimum
/// over exact primitive distances), which is what ray marching from outside
/// requires.
struct SdfScene {
  std::vector<Primitive> primitives;

  bool empty() const { return primitives.empty(); }

  double signed_distance(const Vec3d& p) const {
    double d = std::numeric_limits<double>::infinity();
    for (const Primitive& prim : primitives) d = std::min(d, prim.signed_distance(p));
    return d;
  }
};

// ---------------------------------------------------------------------------
// Indexed triangle mesh (world units). Used for isosurface output and as an
// alternative renderable scene representation.
// ---------------------------------------------------------------------------

struct TriangleMesh {
  std::vector<Vec3d> vertices;
  std::vector<Eigen::Vector3i> triangles;

  bool empty() const { return triangles.empty(); }
};

/// First positive hit of a ray against a triangle mesh (Moller-Trumbore over
/// all triangles; adequate at desk scale). Returns the ray parameter.
inline std::optional<double> raycast_mesh(const TriangleMesh& mesh, const Vec3d& origin,
                                          const Vec3d& dir) {
  double best = std::numeric_limits<double>::infinity();
  for (const auto& tri : mesh.triangles) {
    const Vec3d& a = mesh.vertices[tri[0]];
    const Vec3d e1 = mesh.vertices[tri[1]] - a;
    const Vec3d e2 = mesh.vertices[tri[2]] - a;
    const Vec3d pvec = dir.cross(e2);
    const double det = e1.dot(pvec);
    if (std::abs(det) < 1e-14) continue;
    const double inv_det = 1.0 / det;
    const Vec3d tvec = origin - a;
    const double u = tvec.dot(pvec) * inv_det;
    if (u < 0.0 || u > 1.0) continue;
    const Vec3d qvec = tvec.cross(e1);
    const double v = dir.dot(qvec) * inv_det;
    if (v < 0.0 || u + v > 1.0) continue;
    const double t = e2.dot(qvec) * inv_det;
    if (t > 1e-9 && t < best) best = t;
  }
  if (std::isinf(best)) return std::nullopt;
  return best;
}

}  // namespace ofu
