#pragma once

#include "ofu/fusion.hpp"

namespace ofu {

/// Scalar loss value plus its gradient with respect to the octree-backed
/// prediction's feature store (one channel).
template <class T>
struct LossResult {
  double value = 0.0;
  std::vector<T> grad;
};

/// Mean-per-voxel L1 between an octree-backed prediction and a dense ground
/// truth. A leaf covering |Omega| voxels compares against each of them, so
/// cell weights come out exactly as in the dense computation.
template <class T>
LossResult<T> level_l1_loss(const GridOctree<T>& pred, const DenseVolume<T>& gt) {
  OFU_REQUIRE(pred.channels == 1 && gt.channels == 1, "level_l1_loss: expected 1 channel");
  OFU_REQUIRE(pred.desc == gt.desc, "level_l1_loss: shape mismatch");
  const double inv_n = 1.0 / static_cast<double>(gt.voxel_count());

  LossResult<T> result;
  result.grad.assign(pred.total_leaves(), T(0));
  std::vector<double> value_chunk(kReduceChunks, 0.0);

  parallel_chunks(pred.tree_count(), kReduceChunks, [&](int chunk, std::int64_t lo,
                                                        std::int64_t hi) {
    double acc = 0.0;
    for (std::int64_t t = lo; t < hi; ++t) {
      const int tx = static_cast<int>(t / (pred.grid_dims.y() * pred.grid_dims.z()));
      const int ty = static_cast<int>((t / pred.grid_dims.z()) % pred.grid_dims.y());
      const int tz = static_cast<int>(t % pred.grid_dims.z());
      const Vec3i base(8 * tx, 8 * ty, 8 * tz);
      oct_detail::for_each_tree_leaf(
          pred.trees[t], [&](int leaf, int, const Vec3i& lo_v, int edge) {
            const std::int64_t gl = pred.leaf_offset[t] + leaf;
            const double p = pred.features[gl];
            double gsum = 0.0;
            for (int dx = 0; dx < edge; ++dx)
              for (int dy = 0; dy < edge; ++dy)
                for (int dz = 0; dz < edge; ++dz) {
                  const double r = p - gt.at(0, base.x() + lo_v.x() + dx, base.y() + lo_v.y() + dy,
                                             base.z() + lo_v.z() + dz);
                  acc += std::abs(r);
                  gsum += (r > 0.0) - (r < 0.0);
                }
            result.grad[gl] = static_cast<T>(gsum * inv_n);
          });
    }
    value_chunk[chunk] += acc;
  });

  double total = 0.0;
  for (double v : value_chunk) total += v;
  result.value = total * inv_n;
  return result;
}

/// Mean-per-voxel binary cross entropy between an octree-backed probability
/// field and a dense binary ground truth. Probabilities are clamped away
/// from 0 and 1 for the log terms.
template <class T>
LossResult<T> level_bce_loss(const GridOctree<T>& pred, const DenseVolume<T>& gt) {
  OFU_REQUIRE(pred.channels == 1 && gt.channels == 1, "level_bce_loss: expected 1 channel");
  OFU_REQUIRE(pred.desc == gt.desc, "level_bce_loss: shape mismatch");
  const double inv_n = 1.0 / static_cast<double>(gt.voxel_count());
  constexpr double kEps = 1e-7;

  LossResult<T> result;
  result.grad.assign(pred.total_leaves(), T(0));
  std::vector<double> value_chunk(kReduceChunks, 0.0);

  parallel_chunks(pred.tree_count(), kReduceChunks, [&](int chunk, std::int64_t lo,
                                                        std::int64_t hi) {
    double acc = 0.0;
    for (std::int64_t t = lo; t < hi; ++t) {
      const int tx = static_cast<int>(t / (pred.grid_dims.y() * pred.grid_dims.z()));
      const int ty = static_cast<int>((t / pred.grid_dims.z()) % pred.grid_dims.y());
      const int tz = static_cast<int>(t % pred.grid_dims.z());
      const Vec3i base(8 * tx, 8 * ty, 8 * tz);
      oct_detail::for_each_tree_leaf(
          pred.trees[t], [&](int leaf, int, const Vec3i& lo_v, int edge) {
            const std::int64_t gl = pred.leaf_offset[t] + leaf;
            const double p = std::clamp(static_cast<double>(pred.features[gl]), kEps, 1.0 - kEps);
            double gsum = 0.0;
            for (int dx = 0; dx < edge; ++dx)
              for (int dy = 0; dy < edge; ++dy)
                for (int dz = 0; dz < edge; ++dz) {
                  const double g = gt.at(0, base.x() + lo_v.x() + dx, base.y() + lo_v.y() + dy,
                                         base.z() + lo_v.z() + dz);
                  acc -= g * std::log(p) + (1.0 - g) * std::log(1.0 - p);
                  gsum += (p - g) / (p * (1.0 - p));
                }
            result.grad[gl] = static_cast<T>(gsum * inv_n);
          });
    }
    value_chunk[chunk] += acc;
  });

  double total = 0.0;
  for (double v : value_chunk) total += v;
  result.value = total * inv_n;
  return result;
}

/// Sum over pyramid levels of the per-level mean-per-voxel loss.
template <class T>
double pyramid_loss(const std::vector<FusionField<T>>& recons,
                    const std::vector<DenseVolume<T>>& gts, FieldKind kind) {
  OFU_REQUIRE(recons.size() == gts.size(), "pyramid_loss: level count mismatch");
  double total = 0.0;
  for (std::size_t l = 0; l < recons.size(); ++l) {
    OFU_REQUIRE(recons[l].is_octree(), "pyramid_loss: expected octree-backed reconstructions");
    total += kind == FieldKind::TSDF ? level_l1_loss(recons[l].octree(), gts[l]).value
                                     : level_bce_loss(recons[l].octree(), gts[l]).value;
  }
  return total;
}

}  // namespace ofu
