#pragma once

// Shared test fixtures and independent oracles. Everything here recomputes
// expected values through a different route than the code under test.

#include "ofu/grid_octree.hpp"
#include "ofu/camera.hpp"
#include "ofu/nn/conv.hpp"

#include <doctest.h>

#include <numeric>

namespace ofu::testing {

// ---------------------------------------------------------------------------
// Randomized octrees: structure and leaf features drawn independently, so
// leaf values are not cell means of anything.
// ---------------------------------------------------------------------------

inline TreeBits random_tree_bits(Rng& rng, double p_root = 0.7, double p1 = 0.5,
                                 double p2 = 0.4) {
  TreeBits bits;
  if (rng.uniform() < p_root) {
    bits.set_root();
    for (int c1 = 0; c1 < 8; ++c1)
      if (rng.uniform() < p1) {
        bits.set_l1(c1);
        for (int c2 = 0; c2 < 8; ++c2)
          if (rng.uniform() < p2) bits.set_l2(c1, c2);
      }
  }
  return bits;
}

template <class T>
GridOctree<T> random_octree(Rng& rng, const VolumeDesc& desc, int channels, double lo = -1.0,
                            double hi = 1.0) {
  GridOctree<T> oct(desc, channels);
  for (auto& bits : oct.trees) bits = random_tree_bits(rng);
  oct.rebuild_offsets();
  oct.features.resize(static_cast<std::size_t>(oct.total_leaves()) * channels);
  for (auto& v : oct.features) v = static_cast<T>(rng.uniform(lo, hi));
  return oct;
}

template <class T>
DenseVolume<T> random_volume(Rng& rng, const VolumeDesc& desc, int channels, double lo = -1.0,
                             double hi = 1.0) {
  DenseVolume<T> vol(desc, channels);
  for (auto& v : vol.data) v = static_cast<T>(rng.uniform(lo, hi));
  return vol;
}

// ---------------------------------------------------------------------------
// Pinhole projection oracle via a homogeneous 3x4 matrix (independent of the
// camera module's arithmetic).
// ---------------------------------------------------------------------------

struct HomogeneousProjection {
  double u = 0, v = 0, depth = 0;
};

inline HomogeneousProjection project_homogeneous(const CameraIntrinsics& K, const RigidPose& pose,
                                                 const Vec3d& p_world) {
  Eigen::Matrix<double, 3, 4> P;
  Eigen::Matrix3d Km;
  Km << K.fx, 0, K.cx, 0, K.fy, K.cy, 0, 0, 1;
  P.leftCols<3>() = Km * pose.rotation;
  P.col(3) = Km * pose.translation;
  const Eigen::Vector4d x(p_world.x(), p_world.y(), p_world.z(), 1.0);
  const Vec3d h = P * x;
  return {h.x() / h.z(), h.y() / h.z(), h.z()};
}

/// Smaller positive root of the ray-sphere quadratic, or nothing.
inline std::optional<double> ray_sphere(const Vec3d& origin, const Vec3d& dir_unit,
                                        const Vec3d& center, double radius) {
  const Vec3d oc = origin - center;
  const double b = 2.0 * oc.dot(dir_unit);
  const double c = oc.squaredNorm() - radius * radius;
  const double disc = b * b - 4.0 * c;
  if (disc < 0.0) return std::nullopt;
  const double t = (-b - std::sqrt(disc)) / 2.0;
  if (t <= 0.0) return std::nullopt;
  return t;
}

// ---------------------------------------------------------------------------
// Dense reference operators in double, plain loops.
// ---------------------------------------------------------------------------

template <class T>
DenseVolume<double> naive_conv3(const DenseVolume<T>& x, const ConvParams<T>& p) {
  const Vec3i r = x.desc.resolution;
  DenseVolume<double> y(x.desc, p.out_channels);
  for (int i = 0; i < r.x(); ++i)
    for (int j = 0; j < r.y(); ++j)
      for (int k = 0; k < r.z(); ++k)
        for (int co = 0; co < p.out_channels; ++co) {
          double acc = p.bias[co];
          for (int ci = 0; ci < p.in_channels; ++ci)
            for (int ox = 0; ox < 3; ++ox)
              for (int oy = 0; oy < 3; ++oy)
                for (int oz = 0; oz < 3; ++oz) {
                  const int ii = i + ox - 1, jj = j + oy - 1, kk = k + oz - 1;
                  if (!x.desc.in_range(ii, jj, kk)) continue;
                  acc += static_cast<double>(
                             p.weights[(static_cast<std::size_t>(co) * p.in_channels + ci) * 27 +
                                       (ox * 3 + oy) * 3 + oz]) *
                         static_cast<double>(x.at(ci, ii, jj, kk));
                }
          y.at(co, i, j, k) = acc;
        }
  return y;
}

template <class T>
DenseVolume<T> naive_maxpool(const DenseVolume<T>& x) {
  DenseVolume<T> y(x.desc.coarser(), x.channels);
  const Vec3i r = y.desc.resolution;
  for (int c = 0; c < x.channels; ++c)
    for (int i = 0; i < r.x(); ++i)
      for (int j = 0; j < r.y(); ++j)
        for (int k = 0; k < r.z(); ++k) {
          T best = x.at(c, 2 * i, 2 * j, 2 * k);
          for (int d = 1; d < 8; ++d)
            best = std::max(best, x.at(c, 2 * i + ((d >> 2) & 1), 2 * j + ((d >> 1) & 1),
                                       2 * k + (d & 1)));
          y.at(c, i, j, k) = best;
        }
  return y;
}

template <class T>
DenseVolume<T> naive_nn_upsample(const DenseVolume<T>& x) {
  DenseVolume<T> y(x.desc.finer(), x.channels);
  const Vec3i r = y.desc.resolution;
  for (int c = 0; c < x.channels; ++c)
    for (int i = 0; i < r.x(); ++i)
      for (int j = 0; j < r.y(); ++j)
        for (int k = 0; k < r.z(); ++k) y.at(c, i, j, k) = x.at(c, i / 2, j / 2, k / 2);
  return y;
}

/// Per-cell mean projection of a dense volume onto an octree's structure,
/// by brute-force voxel scanning over each Omega set.
template <class T, class U>
DenseVolume<double> naive_cell_mean(const DenseVolume<U>& dense, const GridOctree<T>& structure) {
  DenseVolume<double> out(dense.desc, dense.channels);
  for_each_cell(structure, [&](const CellRef& cell) {
    for (int c = 0; c < dense.channels; ++c) {
      double acc = 0.0;
      for (int dx = 0; dx < cell.edge; ++dx)
        for (int dy = 0; dy < cell.edge; ++dy)
          for (int dz = 0; dz < cell.edge; ++dz)
            acc += static_cast<double>(dense.at(c, cell.origin.x() + dx, cell.origin.y() + dy,
                                                cell.origin.z() + dz));
      const double mean = acc / (static_cast<double>(cell.edge) * cell.edge * cell.edge);
      for (int dx = 0; dx < cell.edge; ++dx)
        for (int dy = 0; dy < cell.edge; ++dy)
          for (int dz = 0; dz < cell.edge; ++dz)
            out.at(c, cell.origin.x() + dx, cell.origin.y() + dy, cell.origin.z() + dz) = mean;
    }
  });
  return out;
}

/// Hybrid relative/absolute comparison used by the equivalence suites.
inline void check_close(double got, double want, double rel, const char* what) {
  const double tol = rel * (1.0 + std::abs(want));
  if (std::abs(got - want) > tol) {
    CAPTURE(what);
    CAPTURE(got);
    CAPTURE(want);
    CHECK(std::abs(got - want) <= tol);
  }
}

template <class T>
double max_rel_err(const DenseVolume<T>& got, const DenseVolume<double>& want) {
  double worst = 0.0;
  for (std::size_t i = 0; i < got.data.size(); ++i) {
    const double err =
        std::abs(static_cast<double>(got.data[i]) - want.data[i]) / (1.0 + std::abs(want.data[i]));
    worst = std::max(worst, err);
  }
  return worst;
}

}  // namespace ofu::testing
