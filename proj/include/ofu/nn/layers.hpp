#pragma once

#include "ofu/nn/conv.hpp"

namespace ofu {

// ---------------------------------------------------------------------------
// ReLU
// ---------------------------------------------------------------------------

template <class T>
GridOctree<T> oct_relu(const GridOctree<T>& x) {
  GridOctree<T> out = x;
  parallel_for(static_cast<std::int64_t>(out.features.size()),
               [&](std::int64_t i) { out.features[i] = std::max(out.features[i], T(0)); });
  return out;
}

template <class T>
std::vector<T> oct_relu_backward(const GridOctree<T>& out, const std::vector<T>& grad_out) {
  std::vector<T> grad_in(grad_out.size());
  parallel_for(static_cast<std::int64_t>(grad_out.size()), [&](std::int64_t i) {
    grad_in[i] = out.features[i] > T(0) ? grad_out[i] : T(0);
  });
  return grad_in;
}

// ---------------------------------------------------------------------------
// Max pooling: 2x downsampling over 2x2x2 voxel groups, evaluated on the
// octree without densifying. The output structure is the input structure
// coarsened one level: eight trees merge into one, and single-voxel splits
// join their parent cell.
// ---------------------------------------------------------------------------

template <class T>
GridOctree<T> oct_pool(const GridOctree<T>& input) {
  GridOctree<T> out = coarsened_structure(input, input.channels);
  const int n = input.channels;
  parallel_for_each_cell(out, [&](std::int64_t, const CellRef& cell) {
    const Vec3i g = 2 * cell.origin;  // source voxel of the cell's min corner
    const std::int64_t src_tree = input.tree_index(g.x() >> 3, g.y() >> 3, g.z() >> 3);
    const auto [leaf, depth] =
        oct_detail::leaf_of_local(input.trees[src_tree], g.x() & 7, g.y() & 7, g.z() & 7);
    const std::int64_t src = input.leaf_offset[src_tree] + leaf;
    T* dst = out.leaf_data(cell.leaf);
    const int src_edge = oct_detail::cell_edge(depth);
    if (src_edge >= 2 * cell.edge) {
      // Source cell covers the whole pooled region: max of a constant.
      for (int c = 0; c < n; ++c) dst[c] = input.leaf_data(src)[c];
    } else {
      // cell.edge == 1 over a split 2^3 source cell: its eight single-voxel
      // leaves are consecutive in canonical order.
      for (int c = 0; c < n; ++c) {
        T best = input.leaf_data(src)[c];
        for (int i = 1; i < 8; ++i) best = std::max(best, input.leaf_data(src + i)[c]);
        dst[c] = best;
      }
    }
  });
  return out;
}

template <class T>
std::vector<T> oct_pool_backward(const GridOctree<T>& input, const GridOctree<T>& output,
                                 const std::vector<T>& grad_out) {
  const int n = input.channels;
  std::vector<T> grad_in(input.features.size(), T(0));
  // Each output tree covers eight exclusive input trees, so writes are
  // race-free when parallelized over output cells' trees.
  parallel_for_each_cell(output, [&](std::int64_t, const CellRef& cell) {
    const Vec3i g = 2 * cell.origin;
    const std::int64_t src_tree = input.tree_index(g.x() >> 3, g.y() >> 3, g.z() >> 3);
    const auto [leaf, depth] =
        oct_detail::leaf_of_local(input.trees[src_tree], g.x() & 7, g.y() & 7, g.z() & 7);
    const std::int64_t src = input.leaf_offset[src_tree] + leaf;
    const T* g_out = grad_out.data() + cell.leaf * n;
    const int src_edge = oct_detail::cell_edge(depth);
    if (src_edge >= 2 * cell.edge) {
      for (int c = 0; c < n; ++c) grad_in[src * n + c] += g_out[c];
    } else {
      for (int c = 0; c < n; ++c) {
        int arg = 0;
        T best = input.leaf_data(src)[c];
        for (int i = 1; i < 8; ++i) {
          const T v = input.leaf_data(src + i)[c];
          if (v > best) {
            best = v;
            arg = i;
          }
        }
        grad_in[(src + arg) * n + c] += g_out[c];
      }
    }
  });
  return grad_in;
}

// ---------------------------------------------------------------------------
// Unpooling.
//
// oct_unpool doubles the resolution with the canonical doubled structure:
// every output cell covers eight times the voxels of its source cell (capped
// at whole trees, where a merged tree maps to eight merged output trees) and
// copies its value.
//
// oct_unpool_to evaluates the same nearest-neighbor upsampling onto a given
// target structure (the decoder side of skip connections, where the target
// is the encoder structure whose coarsening produced the input).
// ---------------------------------------------------------------------------

template <class T>
GridOctree<T> oct_unpool(const GridOctree<T>& input) {
  GridOctree<T> out = doubled_structure(input, input.channels);
  const int n = input.channels;
  parallel_for_each_cell(out, [&](std::int64_t, const CellRef& cell) {
    const Vec3i g = cell.origin / 2;
    const T* src = input.leaf_data(input.leaf_of_voxel(g.x(), g.y(), g.z()));
    T* dst = out.leaf_data(cell.leaf);
    for (int c = 0; c < n; ++c) dst[c] = src[c];
  });
  return out;
}

/// Mean of the nearest-neighbor-upsampled source over each target leaf.
/// Exact copy when the target is structurally compatible (each halved target
/// box lies inside one source cell).
template <class T>
GridOctree<T> oct_unpool_to(const GridOctree<T>& input, const GridOctree<T>& target_structure) {
  OFU_REQUIRE(target_structure.grid_dims == 2 * input.grid_dims,
              "oct_unpool_to: target must be at twice the resolution");
  GridOctree<T> out = target_structure;
  out.channels = input.channels;
  out.features.assign(static_cast<std::size_t>(out.total_leaves()) * input.channels, T(0));
  const int n = input.channels;
  parallel_for_each_cell(out, [&](std::int64_t, const CellRef& cell) {
    T* dst = out.leaf_data(cell.leaf);
    if (cell.edge == 1) {
      const Vec3i g = cell.origin / 2;
      const T* src = input.leaf_data(input.leaf_of_voxel(g.x(), g.y(), g.z()));
      for (int c = 0; c < n; ++c) dst[c] = src[c];
      return;
    }
    // Halved box of edge/2 source voxels; average source values over it.
    const Vec3i g0 = cell.origin / 2;
    const int half = cell.edge / 2;
    std::array<double, 128> acc{};
    for (int dx = 0; dx < half; ++dx)
      for (int dy = 0; dy < half; ++dy)
        for (int dz = 0; dz < half; ++dz) {
          const T* src =
              input.leaf_data(input.leaf_of_voxel(g0.x() + dx, g0.y() + dy, g0.z() + dz));
          for (int c = 0; c < n; ++c) acc[c] += src[c];
        }
    const double inv = 1.0 / (static_cast<double>(half) * half * half);
    for (int c = 0; c < n; ++c) dst[c] = static_cast<T>(acc[c] * inv);
  });
  return out;
}

/// Backward of oct_unpool_to. Grouped by source tree (all target trees over
/// one source tree are visited by the same task), so accumulation is
/// race-free and deterministic.
template <class T>
std::vector<T> oct_unpool_to_backward(const GridOctree<T>& input,
                                      const GridOctree<T>& output,
                                      const std::vector<T>& grad_out) {
  const int n = input.channels;
  std::vector<T> grad_in(input.features.size(), T(0));
  parallel_for(input.tree_count(), [&](std::int64_t st) {
    const int stx = static_cast<int>(st / (input.grid_dims.y() * input.grid_dims.z()));
    const int sty = static_cast<int>((st / input.grid_dims.z()) % input.grid_dims.y());
    const int stz = static_cast<int>(st % input.grid_dims.z());
    for (int c1 = 0; c1 < 8; ++c1) {
      const int tx = 2 * stx + ((c1 >> 2) & 1);
      const int ty = 2 * sty + ((c1 >> 1) & 1);
      const int tz = 2 * stz + (c1 & 1);
      const std::int64_t tt = output.tree_index(tx, ty, tz);
      const Vec3i base(8 * tx, 8 * ty, 8 * tz);
      oct_detail::for_each_tree_leaf(
          output.trees[tt], [&](int leaf, int, const Vec3i& lo, int edge) {
            const T* g = grad_out.data() + (output.leaf_offset[tt] + leaf) * n;
            const Vec3i g0 = (base + lo) / 2;
            if (edge == 1) {
              const std::int64_t src = input.leaf_of_voxel(g0.x(), g0.y(), g0.z());
              for (int c = 0; c < n; ++c) grad_in[src * n + c] += g[c];
              return;
            }
            const int half = edge / 2;
            const T inv = static_cast<T>(1.0 / (static_cast<double>(half) * half * half));
            for (int dx = 0; dx < half; ++dx)
              for (int dy = 0; dy < half; ++dy)
                for (int dz = 0; dz < half; ++dz) {
                  const std::int64_t src =
                      input.leaf_of_voxel(g0.x() + dx, g0.y() + dy, g0.z() + dz);
                  for (int c = 0; c < n; ++c) grad_in[src * n + c] += g[c] * inv;
                }
          });
    }
  });
  return grad_in;
}

/// Backward of oct_unpool (same grouping argument as above).
template <class T>
std::vector<T> oct_unpool_backward(const GridOctree<T>& input, const GridOctree<T>& output,
                                   const std::vector<T>& grad_out) {
  return oct_unpool_to_backward(input, output, grad_out);
}

// ---------------------------------------------------------------------------
// Channel concatenation of two octrees with identical structure.
// ---------------------------------------------------------------------------

template <class T>
GridOctree<T> oct_concat(const GridOctree<T>& a, const GridOctree<T>& b) {
  OFU_REQUIRE(a.same_structure(b), "oct_concat: structures must match");
  GridOctree<T> out = a;
  out.channels = a.channels + b.channels;
  out.features.resize(static_cast<std::size_t>(out.total_leaves()) * out.channels);
  parallel_for(out.total_leaves(), [&](std::int64_t l) {
    T* dst = out.features.data() + l * out.channels;
    const T* pa = a.features.data() + l * a.channels;
    const T* pb = b.features.data() + l * b.channels;
    std::copy(pa, pa + a.channels, dst);
    std::copy(pb, pb + b.channels, dst + a.channels);
  });
  return out;
}

template <class T>
std::pair<std::vector<T>, std::vector<T>> oct_concat_backward(int channels_a, int channels_b,
                                                              std::int64_t leaves,
                                                              const std::vector<T>& grad_out) {
  std::vector<T> ga(static_cast<std::size_t>(leaves) * channels_a);
  std::vector<T> gb(static_cast<std::size_t>(leaves) * channels_b);
  const int n = channels_a + channels_b;
  parallel_for(leaves, [&](std::int64_t l) {
    const T* g = grad_out.data() + l * n;
    std::copy(g, g + channels_a, ga.begin() + l * channels_a);
    std::copy(g + channels_a, g + n, gb.begin() + l * channels_b);
  });
  return {std::move(ga), std::move(gb)};
}

}  // namespace ofu
