#pragma once

#include "ofu/volume.hpp"

#include <bit>

namespace ofu {

// ---------------------------------------------------------------------------
// Grid of shallow octrees (depth <= 3). Each tree covers an 8x8x8 voxel block
// and its split pattern is a 73-bit string: 1 root bit, 8 level-1 bits and 64
// level-2 bits. A set bit splits the cell into its 8 children; a level-2
// split yields individual voxels. Child order within a cell is
// c = (cx<<2) | (cy<<1) | cz.
// ---------------------------------------------------------------------------

struct TreeBits {
  std::uint8_t root = 0;
  std::uint8_t l1 = 0;
  std::uint64_t l2 = 0;

  bool l1_bit(int c1) const { return (l1 >> c1) & 1; }
  bool l2_bit(int c1, int c2) const { return (l2 >> (8 * c1 + c2)) & 1; }
  std::uint8_t l2_byte(int c1) const { return static_cast<std::uint8_t>(l2 >> (8 * c1)); }

  void set_root() { root = 1; }
  void set_l1(int c1) { l1 |= std::uint8_t(1) << c1; }
  void set_l2(int c1, int c2) { l2 |= std::uint64_t(1) << (8 * c1 + c2); }

  /// Parent-bit implication: children may be split only below split parents.
  bool valid() const {
    if (!root && l1 != 0) return false;
    for (int c1 = 0; c1 < 8; ++c1)
      if (!l1_bit(c1) && l2_byte(c1) != 0) return false;
    return true;
  }

  int leaf_count() const {
    return 1 + 7 * (int(root) + std::popcount(static_cast<unsigned>(l1)) + std::popcount(l2));
  }

  /// Leaves in the subtree rooted at level-1 child c1 (requires root split).
  int l1_subtree_leaves(int c1) const {
    return l1_bit(c1) ? 8 + 7 * std::popcount(static_cast<unsigned>(l2_byte(c1))) : 1;
  }

  bool operator==(const TreeBits& o) const {
    return root == o.root && l1 == o.l1 && l2 == o.l2;
  }
};

namespace oct_detail {

inline int child_of(int x, int y, int z) { return (x << 2) | (y << 1) | z; }

/// Voxels per leaf cell at a given depth (0 = whole tree, 3 = single voxel).
inline int cell_edge(int depth) { return 8 >> depth; }
inline int cell_voxels(int depth) { return 1 << (3 * (3 - depth)); }

/// Leaf ordinal within the tree of the leaf containing local voxel (lx,ly,lz),
/// together with its depth. Canonical order is depth-first with children in
/// c = (cx<<2)|(cy<<1)|cz order.
inline std::pair<int, int> leaf_of_local(const TreeBits& bits, int lx, int ly, int lz) {
  if (!bits.root) return {0, 0};
  const int c1 = child_of(lx >> 2, ly >> 2, lz >> 2);
  int base = 0;
  for (int c = 0; c < c1; ++c) base += bits.l1_subtree_leaves(c);
  if (!bits.l1_bit(c1)) return {base, 1};
  const int c2 = child_of((lx >> 1) & 1, (ly >> 1) & 1, (lz >> 1) & 1);
  for (int c = 0; c < c2; ++c) base += bits.l2_bit(c1, c) ? 8 : 1;
  if (!bits.l2_bit(c1, c2)) return {base, 2};
  return {base + child_of(lx & 1, ly & 1, lz & 1), 3};
}

/// Visits every leaf of one tree in canonical order:
/// fn(leaf_ordinal, depth, local_origin, edge).
template <class Fn>
void for_each_tree_leaf(const TreeBits& bits, Fn&& fn) {
  if (!bits.root) {
    fn(0, 0, Vec3i(0, 0, 0), 8);
    return;
  }
  int leaf = 0;
  for (int c1 = 0; c1 < 8; ++c1) {
    const Vec3i o1(4 * ((c1 >> 2) & 1), 4 * ((c1 >> 1) & 1), 4 * (c1 & 1));
    if (!bits.l1_bit(c1)) {
      fn(leaf++, 1, o1, 4);
      continue;
    }
    for (int c2 = 0; c2 < 8; ++c2) {
      const Vec3i o2 = o1 + Vec3i(2 * ((c2 >> 2) & 1), 2 * ((c2 >> 1) & 1), 2 * (c2 & 1));
      if (!bits.l2_bit(c1, c2)) {
        fn(leaf++, 2, o2, 2);
        continue;
      }
      for (int c3 = 0; c3 < 8; ++c3) {
        const Vec3i o3 = o2 + Vec3i((c3 >> 2) & 1, (c3 >> 1) & 1, c3 & 1);
        fn(leaf++, 3, o3, 1);
      }
    }
  }
}

}  // namespace oct_detail

/// One boolean per leaf cell, aligned with the paired octree's feature store.
using SplitMask = std::vector<std::uint8_t>;

template <class T>
struct GridOctree {
  VolumeDesc desc;       // resolution = 8 * grid_dims
  Vec3i grid_dims;       // shallow-octree counts (D, H, W)
  int channels = 1;
  std::vector<TreeBits> trees;
  std::vector<std::int64_t> leaf_offset;  // per tree, plus total at the end
  std::vector<T> features;                // leaf-major, [leaf][channel]

  GridOctree() = default;
  GridOctree(const VolumeDesc& d, int n) : desc(d), channels(n) {
    OFU_REQUIRE(d.resolution.x() % 8 == 0 && d.resolution.y() % 8 == 0 &&
                    d.resolution.z() % 8 == 0,
                "GridOctree: resolution must be divisible by 8");
    OFU_REQUIRE(n > 0, "GridOctree: channels must be positive");
    grid_dims = d.resolution / 8;
    trees.assign(tree_count(), TreeBits{});
    rebuild_offsets();
    features.assign(static_cast<std::size_t>(total_leaves()) * channels, T(0));
  }

  std::int64_t tree_count() const {
    return static_cast<std::int64_t>(grid_dims.x()) * grid_dims.y() * grid_dims.z();
  }
  std::int64_t tree_index(int tx, int ty, int tz) const {
    return (static_cast<std::int64_t>(tx) * grid_dims.y() + ty) * grid_dims.z() + tz;
  }
  std::int64_t total_leaves() const { return leaf_offset.back(); }

  /// Recomputes the per-tree feature offsets from the structure bits.
  void rebuild_offsets() {
    leaf_offset.resize(trees.size() + 1);
    std::int64_t acc = 0;
    for (std::size_t t = 0; t < trees.size(); ++t) {
      leaf_offset[t] = acc;
      acc += trees[t].leaf_count();
    }
    leaf_offset[trees.size()] = acc;
  }

  std::int64_t leaf_of_voxel(int i, int j, int k) const {
    const std::int64_t t = tree_index(i >> 3, j >> 3, k >> 3);
    return leaf_offset[t] + oct_detail::leaf_of_local(trees[t], i & 7, j & 7, k & 7).first;
  }

  T* leaf_data(std::int64_t leaf) { return features.data() + leaf * channels; }
  const T* leaf_data(std::int64_t leaf) const { return features.data() + leaf * channels; }

  T value_at(int c, int i, int j, int k) const { return leaf_data(leaf_of_voxel(i, j, k))[c]; }

  /// Feature store viewed as (leaves x channels), row-major.
  Eigen::Map<Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>> feature_matrix() {
    return {features.data(), total_leaves(), channels};
  }
  Eigen::Map<const Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>>
  feature_matrix() const {
    return {features.data(), total_leaves(), channels};
  }

  bool same_structure(const GridOctree& o) const {
    return grid_dims == o.grid_dims && trees == o.trees;
  }
};

/// One leaf cell: global leaf index, voxel-space origin and edge length.
struct CellRef {
  std::int64_t leaf;
  Vec3i origin;
  int edge;
};

/// Visits every leaf cell exactly once, in canonical (tree, DFS) order.
/// Spans tile the volume without overlap.
template <class T, class Fn>
void for_each_cell(const GridOctree<T>& oct, Fn&& fn) {
  for (std::int64_t t = 0; t < oct.tree_count(); ++t) {
    const int tx = static_cast<int>(t / (oct.grid_dims.y() * oct.grid_dims.z()));
    const int ty = static_cast<int>((t / oct.grid_dims.z()) % oct.grid_dims.y());
    const int tz = static_cast<int>(t % oct.grid_dims.z());
    const Vec3i base(8 * tx, 8 * ty, 8 * tz);
    oct_detail::for_each_tree_leaf(oct.trees[t], [&](int leaf, int, const Vec3i& lo, int edge) {
      fn(CellRef{oct.leaf_offset[t] + leaf, base + lo, edge});
    });
  }
}

/// Parallel per-tree variant; fn is invoked with (tree_index, CellRef).
template <class T, class Fn>
void parallel_for_each_cell(const GridOctree<T>& oct, Fn&& fn) {
  parallel_for(oct.tree_count(), [&](std::int64_t t) {
    const int tx = static_cast<int>(t / (oct.grid_dims.y() * oct.grid_dims.z()));
    const int ty = static_cast<int>((t / oct.grid_dims.z()) % oct.grid_dims.y());
    const int tz = static_cast<int>(t % oct.grid_dims.z());
    const Vec3i base(8 * tx, 8 * ty, 8 * tz);
    oct_detail::for_each_tree_leaf(oct.trees[t], [&](int leaf, int, const Vec3i& lo, int edge) {
      fn(t, CellRef{oct.leaf_offset[t] + leaf, base + lo, edge});
    });
  });
}

/// Structure validator: parent-bit implications, offset consistency and
/// feature-store compaction. Throws on violation.
template <class T>
void validate(const GridOctree<T>& oct) {
  OFU_REQUIRE(oct.desc.resolution == 8 * oct.grid_dims, "octree: desc/grid size mismatch");
  OFU_REQUIRE(oct.leaf_offset.size() == oct.trees.size() + 1, "octree: offset table size");
  std::int64_t acc = 0;
  for (std::size_t t = 0; t < oct.trees.size(); ++t) {
    OFU_REQUIRE(oct.trees[t].valid(), "octree: parent-bit implication violated");
    OFU_REQUIRE(oct.leaf_offset[t] == acc, "octree: stale leaf offset");
    acc += oct.trees[t].leaf_count();
  }
  OFU_REQUIRE(oct.leaf_offset.back() == acc, "octree: stale total leaf count");
  OFU_REQUIRE(static_cast<std::int64_t>(oct.features.size()) == acc * oct.channels,
              "octree: feature store not compacted");
}

/// Builds a grid-octree from a dense volume. Cells are split to single voxels
/// wherever pred(i,j,k) holds and merged elsewhere; merged cells carry the
/// arithmetic mean of their voxels.
template <class T, class Pred>
GridOctree<T> from_dense(const DenseVolume<T>& vol, Pred&& pred) {
  OFU_REQUIRE(vol.desc.resolution.x() % 8 == 0 && vol.desc.resolution.y() % 8 == 0 &&
                  vol.desc.resolution.z() % 8 == 0,
              "from_dense: resolution must be divisible by 8 in every dimension");
  GridOctree<T> oct(vol.desc, vol.channels);

  parallel_for(oct.tree_count(), [&](std::int64_t t) {
    const int tx = static_cast<int>(t / (oct.grid_dims.y() * oct.grid_dims.z()));
    const int ty = static_cast<int>((t / oct.grid_dims.z()) % oct.grid_dims.y());
    const int tz = static_cast<int>(t % oct.grid_dims.z());
    TreeBits bits;
    for (int c1 = 0; c1 < 8; ++c1)
      for (int c2 = 0; c2 < 8; ++c2) {
        const int bx = 8 * tx + 4 * ((c1 >> 2) & 1) + 2 * ((c2 >> 2) & 1);
        const int by = 8 * ty + 4 * ((c1 >> 1) & 1) + 2 * ((c2 >> 1) & 1);
        const int bz = 8 * tz + 4 * (c1 & 1) + 2 * (c2 & 1);
        bool any = false;
        for (int dx = 0; dx < 2 && !any; ++dx)
          for (int dy = 0; dy < 2 && !any; ++dy)
            for (int dz = 0; dz < 2 && !any; ++dz) any = pred(bx + dx, by + dy, bz + dz);
        if (any) {
          bits.set_root();
          bits.set_l1(c1);
          bits.set_l2(c1, c2);
        }
      }
    oct.trees[t] = bits;
  });

  oct.rebuild_offsets();
  oct.features.assign(static_cast<std::size_t>(oct.total_leaves()) * oct.channels, T(0));
  fill_from_dense(oct, vol);
  return oct;
}

/// Overwrites the octree's features with per-cell means of the dense volume
/// (structure unchanged). Accumulation in double.
template <class T>
void fill_from_dense(GridOctree<T>& oct, const DenseVolume<T>& vol) {
  OFU_REQUIRE(vol.desc == oct.desc && vol.channels == oct.channels,
              "fill_from_dense: volume/octree mismatch");
  parallel_for_each_cell(oct, [&](std::int64_t, const CellRef& cell) {
    T* out = oct.leaf_data(cell.leaf);
    for (int c = 0; c < oct.channels; ++c) {
      double acc = 0.0;
      for (int dx = 0; dx < cell.edge; ++dx)
        for (int dy = 0; dy < cell.edge; ++dy)
          for (int dz = 0; dz < cell.edge; ++dz)
            acc += static_cast<double>(
                vol.at(c, cell.origin.x() + dx, cell.origin.y() + dy, cell.origin.z() + dz));
      out[c] = static_cast<T>(acc / (static_cast<double>(cell.edge) * cell.edge * cell.edge));
    }
  });
}

/// Same-structure octree whose features are the cell means of the dense input.
template <class T>
GridOctree<T> project_dense_onto(const DenseVolume<T>& vol, const GridOctree<T>& reference) {
  GridOctree<T> out = reference;
  out.channels = vol.channels;
  out.features.assign(static_cast<std::size_t>(out.total_leaves()) * vol.channels, T(0));
  fill_from_dense(out, vol);
  return out;
}

/// Every voxel receives its containing cell's feature vector.
template <class T>
DenseVolume<T> to_dense(const GridOctree<T>& oct) {
  DenseVolume<T> vol(oct.desc, oct.channels);
  parallel_for_each_cell(oct, [&](std::int64_t, const CellRef& cell) {
    const T* src = oct.leaf_data(cell.leaf);
    for (int c = 0; c < oct.channels; ++c)
      for (int dx = 0; dx < cell.edge; ++dx)
        for (int dy = 0; dy < cell.edge; ++dy)
          for (int dz = 0; dz < cell.edge; ++dz)
            vol.at(c, cell.origin.x() + dx, cell.origin.y() + dy, cell.origin.z() + dz) = src[c];
  });
  return vol;
}

/// Subdivides each masked leaf one level; children copy the parent value.
/// Masked single-voxel leaves are unchanged.
template <class T>
GridOctree<T> split_cells(const GridOctree<T>& oct, const SplitMask& mask) {
  OFU_REQUIRE(static_cast<std::int64_t>(mask.size()) == oct.total_leaves(),
              "split_cells: mask length must equal leaf count");
  GridOctree<T> out;
  out.desc = oct.desc;
  out.grid_dims = oct.grid_dims;
  out.channels = oct.channels;
  out.trees = oct.trees;

  parallel_for(oct.tree_count(), [&](std::int64_t t) {
    TreeBits& bits = out.trees[t];
    oct_detail::for_each_tree_leaf(oct.trees[t],
                                   [&](int leaf, int depth, const Vec3i& lo, int) {
      if (!mask[oct.leaf_offset[t] + leaf]) return;
      switch (depth) {
        case 0:
          bits.set_root();
          break;
        case 1:
          bits.set_l1(oct_detail::child_of(lo.x() >> 2, lo.y() >> 2, lo.z() >> 2));
          break;
        case 2:
          bits.set_l2(oct_detail::child_of(lo.x() >> 2, lo.y() >> 2, lo.z() >> 2),
                      oct_detail::child_of((lo.x() >> 1) & 1, (lo.y() >> 1) & 1,
                                           (lo.z() >> 1) & 1));
          break;
        default:  // already at a single voxel: no-op
          break;
      }
    });
  });

  out.rebuild_offsets();
  out.features.assign(static_cast<std::size_t>(out.total_leaves()) * out.channels, T(0));
  parallel_for_each_cell(out, [&](std::int64_t, const CellRef& cell) {
    const T* src = oct.leaf_data(oct.leaf_of_voxel(cell.origin.x(), cell.origin.y(),
                                                   cell.origin.z()));
    T* dst = out.leaf_data(cell.leaf);
    for (int c = 0; c < out.channels; ++c) dst[c] = src[c];
  });
  return out;
}

// ---------------------------------------------------------------------------
// Structure derivation for pooling / unpooling. Coarsening maps eight trees
// onto one (each level moves up by one; single-voxel splits merge into their
// parent); doubling is the inverse mapping where every cell covers eight
// times the voxels of its source.
// ---------------------------------------------------------------------------

template <class T>
GridOctree<T> coarsened_structure(const GridOctree<T>& oct, int channels) {
  OFU_REQUIRE(oct.grid_dims.x() % 2 == 0 && oct.grid_dims.y() % 2 == 0 &&
                  oct.grid_dims.z() % 2 == 0,
              "coarsened_structure: tree grid must be even");
  GridOctree<T> out(oct.desc.coarser(), channels);
  parallel_for(out.tree_count(), [&](std::int64_t t) {
    const int tx = static_cast<int>(t / (out.grid_dims.y() * out.grid_dims.z()));
    const int ty = static_cast<int>((t / out.grid_dims.z()) % out.grid_dims.y());
    const int tz = static_cast<int>(t % out.grid_dims.z());
    TreeBits bits;
    bits.set_root();
    for (int c1 = 0; c1 < 8; ++c1) {
      const TreeBits& src = oct.trees[oct.tree_index(
          2 * tx + ((c1 >> 2) & 1), 2 * ty + ((c1 >> 1) & 1), 2 * tz + (c1 & 1))];
      if (src.root) {
        bits.set_l1(c1);
        for (int c2 = 0; c2 < 8; ++c2)
          if (src.l1_bit(c2)) bits.set_l2(c1, c2);
      }
    }
    out.trees[t] = bits;
  });
  out.rebuild_offsets();
  out.features.assign(static_cast<std::size_t>(out.total_leaves()) * channels, T(0));
  return out;
}

template <class T>
GridOctree<T> doubled_structure(const GridOctree<T>& oct, int channels) {
  GridOctree<T> out(oct.desc.finer(), channels);
  parallel_for(out.tree_count(), [&](std::int64_t t) {
    const int tx = static_cast<int>(t / (out.grid_dims.y() * out.grid_dims.z()));
    const int ty = static_cast<int>((t / out.grid_dims.z()) % out.grid_dims.y());
    const int tz = static_cast<int>(t % out.grid_dims.z());
    const TreeBits& src = oct.trees[oct.tree_index(tx >> 1, ty >> 1, tz >> 1)];
    TreeBits bits;
    if (src.root) {
      const int c1 = oct_detail::child_of(tx & 1, ty & 1, tz & 1);
      if (src.l1_bit(c1)) {
        bits.set_root();
        for (int c2 = 0; c2 < 8; ++c2)
          if (src.l2_bit(c1, c2)) bits.set_l1(c2);
      }
    }
    out.trees[t] = bits;
  });
  out.rebuild_offsets();
  out.features.assign(static_cast<std::size_t>(out.total_leaves()) * channels, T(0));
  return out;
}

}  // namespace ofu
