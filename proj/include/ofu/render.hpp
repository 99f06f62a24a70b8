#pragma once

#include "ofu/sdf.hpp"

namespace ofu {

namespace detail {

/// First hit of a unit-speed ray against an SDF scene: sphere tracing to
/// bracket the surface, then bisection. Returns the ray parameter.
inline std::optional<double> raycast_sdf(const SdfScene& scene, const Vec3d& origin,
                                         const Vec3d& dir_unit, double t_far) {
  constexpr double kHitEps = 1e-9;
  constexpr int kMaxSteps = 4096;

  double t = 0.0;
  double d = scene.signed_distance(origin);
  if (d <= 0.0) return 0.0;  // origin inside: immediate hit
  for (int step = 0; step < kMaxSteps; ++step) {
    const double t_next = t + d;
    const double d_next = scene.signed_distance(origin + t_next * dir_unit);
    if (d_next <= kHitEps) {
      // Bracket [t, t_next+] and bisect to the zero crossing.
      double lo = t, hi = t_next;
      double d_hi = d_next;
      while (d_hi > 0.0) {  // ensure the upper end is non-positive
        hi += std::max(d_hi, 1e-9);
        d_hi = scene.signed_distance(origin + hi * dir_unit);
        if (hi > t_far) return std::nullopt;
      }
      for (int it = 0; it < 80; ++it) {
        const double mid = 0.5 * (lo + hi);
        if (scene.signed_distance(origin + mid * dir_unit) > 0.0)
          lo = mid;
        else
          hi = mid;
        if (hi - lo < 1e-12) break;
      }
      return 0.5 * (lo + hi);
    }
    t = t_next;
    d = d_next;
    if (t > t_far) return std::nullopt;
  }
  // Step budget exhausted (grazing ray): treat as a hit only if already at
  // the surface to within a micron.
  if (d <= 1e-6) return t;
  return std::nullopt;
}

}  // namespace detail

/// Renders a per-pixel first-hit depth map of the scene from the given
/// camera. Depths are camera-frame z; misses are the invalid sentinel.
inline DepthView render_depth(const SdfScene& scene, const CameraIntrinsics& K,
                              const RigidPose& pose, double t_far = 50.0) {
  OFU_REQUIRE(!scene.empty(), "render_depth: scene has no geometry");
  DepthView view(K, pose);
  const Vec3d cam_center = pose.camera_center();
  parallel_for(static_cast<std::int64_t>(K.height) * K.width, [&](std::int64_t px) {
    const int row = static_cast<int>(px / K.width);
    const int col = static_cast<int>(px % K.width);
    const PixelRay ray = pixel_ray(K, pose, col, row);
    const double dir_norm = ray.dir.norm();
    const Vec3d dir_unit = ray.dir / dir_norm;
    const auto t_hit = detail::raycast_sdf(scene, cam_center, dir_unit, t_far * dir_norm);
    if (t_hit) {
      const Vec3d p_cam = pose.to_camera(cam_center + *t_hit * dir_unit);
      view.depth(row, col) = static_cast<float>(p_cam.z());
    }
  });
  return view;
}

/// Mesh-scene variant of render_depth.
inline DepthView render_depth(const TriangleMesh& mesh, const CameraIntrinsics& K,
                              const RigidPose& pose) {
  OFU_REQUIRE(!mesh.empty(), "render_depth: scene has no geometry");
  DepthView view(K, pose);
  const Vec3d cam_center = pose.camera_center();
  parallel_for(static_cast<std::int64_t>(K.height) * K.width, [&](std::int64_t px) {
    const int row = static_cast<int>(px / K.width);
    const int col = static_cast<int>(px % K.width);
    const PixelRay ray = pixel_ray(K, pose, col, row);
    const auto t_hit = raycast_mesh(mesh, cam_center, ray.dir);
    if (t_hit) view.depth(row, col) = static_cast<float>(*t_hit);  // dir has unit camera z
  });
  return view;
}

}  // namespace ofu
