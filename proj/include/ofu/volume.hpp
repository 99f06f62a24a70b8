#pragma once

#include "ofu/common.hpp"

namespace ofu {

/// World-space placement of a voxel volume. Voxel (i,j,k) has its center at
/// origin + (i+1/2, j+1/2, k+1/2) * voxel_size.
struct VolumeDesc {
  Vec3d origin = Vec3d::Zero();
  double voxel_size = 1.0;
  Vec3i resolution = Vec3i::Zero();  // (Dx, Dy, Dz)

  VolumeDesc() = default;
  VolumeDesc(const Vec3d& origin_, double voxel_size_, const Vec3i& res)
      : origin(origin_), voxel_size(voxel_size_), resolution(res) {
    OFU_REQUIRE(voxel_size > 0.0, "VolumeDesc: voxel_size must be positive");
    OFU_REQUIRE(res.x() > 0 && res.y() > 0 && res.z() > 0,
                "VolumeDesc: resolution components must be positive");
  }

  /// Cube volume helper: axis-aligned cube of the given edge length.
  static VolumeDesc cube(const Vec3d& min_corner, double edge, int res) {
    return VolumeDesc(min_corner, edge / res, Vec3i(res, res, res));
  }

  std::int64_t voxel_count() const {
    return static_cast<std::int64_t>(resolution.x()) * resolution.y() * resolution.z();
  }

  Vec3d voxel_center(int i, int j, int k) const {
    return origin + voxel_size * Vec3d(i + 0.5, j + 0.5, k + 0.5);
  }

  bool in_range(int i, int j, int k) const {
    return i >= 0 && j >= 0 && k >= 0 && i < resolution.x() && j < resolution.y() &&
           k < resolution.z();
  }

  std::int64_t linear_index(int i, int j, int k) const {
    return (static_cast<std::int64_t>(i) * resolution.y() + j) * resolution.z() + k;
  }

  bool operator==(const VolumeDesc& o) const {
    return origin == o.origin && voxel_size == o.voxel_size && resolution == o.resolution;
  }
  bool operator!=(const VolumeDesc& o) const { return !(*this == o); }

  /// Volume descriptor covering the same world box at half the resolution.
  VolumeDesc coarser() const {
    OFU_REQUIRE(resolution.x() % 2 == 0 && resolution.y() % 2 == 0 && resolution.z() % 2 == 0,
                "VolumeDesc::coarser: resolution must be even");
    return VolumeDesc(origin, 2.0 * voxel_size, resolution / 2);
  }

  /// Volume descriptor covering the same world box at twice the resolution.
  VolumeDesc finer() const { return VolumeDesc(origin, 0.5 * voxel_size, 2 * resolution); }
};

/// Dense n-channel voxel volume with data laid out as (channel, x, y, z),
/// z fastest.
template <class T>
struct DenseVolume {
  VolumeDesc desc;
  int channels = 1;
  std::vector<T> data;

  DenseVolume() = default;
  DenseVolume(const VolumeDesc& d, int n, T fill = T(0))
      : desc(d), channels(n), data(static_cast<std::size_t>(n) * d.voxel_count(), fill) {
    OFU_REQUIRE(n > 0, "DenseVolume: channels must be positive");
  }

  std::int64_t voxel_count() const { return desc.voxel_count(); }

  T& at(int c, int i, int j, int k) {
    return data[static_cast<std::size_t>(c) * voxel_count() + desc.linear_index(i, j, k)];
  }
  const T& at(int c, int i, int j, int k) const {
    return data[static_cast<std::size_t>(c) * voxel_count() + desc.linear_index(i, j, k)];
  }

  T& at(int c, std::int64_t voxel) {
    return data[static_cast<std::size_t>(c) * voxel_count() + voxel];
  }
  const T& at(int c, std::int64_t voxel) const {
    return data[static_cast<std::size_t>(c) * voxel_count() + voxel];
  }

  /// Contiguous single-channel plane.
  Eigen::Map<Eigen::Array<T, Eigen::Dynamic, 1>> channel(int c) {
    return {data.data() + static_cast<std::size_t>(c) * voxel_count(), voxel_count()};
  }
  Eigen::Map<const Eigen::Array<T, Eigen::Dynamic, 1>> channel(int c) const {
    return {data.data() + static_cast<std::size_t>(c) * voxel_count(), voxel_count()};
  }

  template <class U>
  DenseVolume<U> cast() const {
    DenseVolume<U> out(desc, channels);
    for (std::size_t i = 0; i < data.size(); ++i) out.data[i] = static_cast<U>(data[i]);
    return out;
  }
};

}  // namespace ofu
