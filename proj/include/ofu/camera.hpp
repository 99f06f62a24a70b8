#pragma once

#include "ofu/volume.hpp"

#include <bit>
#include <optional>

namespace ofu {

// ---------------------------------------------------------------------------
// Invalid-depth sentinel: a reserved quiet-NaN bit pattern, never 0.
// ---------------------------------------------------------------------------

inline constexpr std::uint32_t kInvalidDepthBits = 0x7FC00001u;

inline float invalid_depth() { return std::bit_cast<float>(kInvalidDepthBits); }
inline bool depth_is_valid(float d) { return !std::isnan(d); }

/// Pinhole intrinsics. Pixel (col,row) integrates the ray through continuous
/// image coordinates (col+1/2, row+1/2).
struct CameraIntrinsics {
  double fx = 0, fy = 0, cx = 0, cy = 0;
  int width = 0, height = 0;

  CameraIntrinsics() = default;
  CameraIntrinsics(double fx_, double fy_, double cx_, double cy_, int w, int h)
      : fx(fx_), fy(fy_), cx(cx_), cy(cy_), width(w), height(h) {
    OFU_REQUIRE(fx > 0 && fy > 0, "CameraIntrinsics: focal lengths must be positive");
    OFU_REQUIRE(w >= 1 && h >= 1, "CameraIntrinsics: image size must be at least 1x1");
  }
};

/// Rigid transform world -> camera. Camera looks down +z in its own frame.
struct RigidPose {
  Mat3d rotation = Mat3d::Identity();
  Vec3d translation = Vec3d::Zero();

  Vec3d to_camera(const Vec3d& p_world) const { return rotation * p_world + translation; }
  Vec3d to_world(const Vec3d& p_cam) const {
    return rotation.transpose() * (p_cam - translation);
  }
  Vec3d camera_center() const { return -(rotation.transpose() * translation); }

  bool is_rigid(double tol = 1e-6) const {
    const Mat3d err = rotation * rotation.transpose() - Mat3d::Identity();
    return err.cwiseAbs().maxCoeff() <= tol && std::abs(rotation.determinant() - 1.0) <= tol;
  }
};

/// A depth map with its camera. Depth values are z-coordinates in the camera
/// frame, in meters; invalid pixels carry the NaN sentinel.
struct DepthView {
  CameraIntrinsics intrinsics;
  RigidPose pose;
  Eigen::Matrix<float, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor> depth;  // h x w

  DepthView() = default;
  DepthView(const CameraIntrinsics& K, const RigidPose& P)
      : intrinsics(K), pose(P), depth(K.height, K.width) {
    OFU_REQUIRE(P.is_rigid(), "DepthView: pose rotation must be orthonormal with det +1");
    depth.setConstant(invalid_depth());
  }

  float depth_at(int col, int row) const { return depth(row, col); }
};

/// Per-view observation of one voxel: the voxel's depth along the camera's z
/// axis, the depth map's value at its projection (when available), and their
/// signed gap, positive in front of the observed surface.
struct VoxelObservation {
  double voxel_depth = 0.0;
  std::optional<double> map_depth;
  std::optional<double> signed_gap;  // map_depth - voxel_depth
};

/// Projects a world point into a view; nearest-neighbor depth lookup.
/// Out-of-frustum, behind-camera and invalid-pixel cases yield a missing
/// map_depth, not an error.
inline VoxelObservation observe_point(const Vec3d& p_world, const DepthView& view) {
  VoxelObservation obs;
  const Vec3d p_cam = view.pose.to_camera(p_world);
  obs.voxel_depth = p_cam.z();
  if (p_cam.z() <= 0.0) return obs;

  const CameraIntrinsics& K = view.intrinsics;
  const double u = K.fx * p_cam.x() / p_cam.z() + K.cx;
  const double v = K.fy * p_cam.y() / p_cam.z() + K.cy;
  const int col = static_cast<int>(std::floor(u));
  const int row = static_cast<int>(std::floor(v));
  if (u < 0.0 || v < 0.0 || col < 0 || col >= K.width || row < 0 || row >= K.height) return obs;

  const float d = view.depth_at(col, row);
  if (!depth_is_valid(d)) return obs;
  obs.map_depth = static_cast<double>(d);
  obs.signed_gap = *obs.map_depth - obs.voxel_depth;
  return obs;
}

inline VoxelObservation project_voxel(const VolumeDesc& desc, const Vec3i& idx,
                                      const DepthView& view) {
  OFU_REQUIRE(desc.in_range(idx.x(), idx.y(), idx.z()), "project_voxel: voxel index out of range");
  return observe_point(desc.voxel_center(idx.x(), idx.y(), idx.z()), view);
}

/// World point of pixel (col,row) at camera-frame depth d.
inline Vec3d backproject_pixel(const CameraIntrinsics& K, const RigidPose& pose, int col, int row,
                               double d) {
  const double x = (col + 0.5 - K.cx) / K.fx * d;
  const double y = (row + 0.5 - K.cy) / K.fy * d;
  return pose.to_world(Vec3d(x, y, d));
}

/// World-space ray through the center of pixel (col,row); direction has unit
/// camera-z so that the ray parameter equals camera depth.
struct PixelRay {
  Vec3d origin;
  Vec3d dir;  // world direction, scaled so camera-frame z component is 1
};

inline PixelRay pixel_ray(const CameraIntrinsics& K, const RigidPose& pose, int col, int row) {
  const Vec3d dir_cam((col + 0.5 - K.cx) / K.fx, (row + 0.5 - K.cy) / K.fy, 1.0);
  return {pose.camera_center(), pose.rotation.transpose() * dir_cam};
}

/// Camera at `position` looking at `target`, +z toward the target.
inline RigidPose look_at(const Vec3d& position, const Vec3d& target,
                         const Vec3d& up_hint = Vec3d(0, 0, 1)) {
  const Vec3d z = (target - position).normalized();
  Vec3d up = up_hint;
  if (std::abs(up.dot(z)) > 0.999) up = Vec3d(1, 0, 0);
  const Vec3d x = up.cross(z).normalized();
  const Vec3d y = z.cross(x);
  RigidPose pose;
  pose.rotation.row(0) = x;
  pose.rotation.row(1) = y;
  pose.rotation.row(2) = z;
  pose.translation = -(pose.rotation * position);
  return pose;
}

}  // namespace ofu
