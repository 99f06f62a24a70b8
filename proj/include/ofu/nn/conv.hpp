#pragma once

#include "ofu/grid_octree.hpp"

namespace ofu {

/// Weights of one convolution layer. kernel is 3 (3x3x3) or 1 (1x1x1).
/// 3x3x3 weights are laid out [out][in][offset] with
/// offset = (ox*3 + oy)*3 + oz and ox,oy,oz in {0,1,2} (the spatial offset
/// minus one); this is row-major (out) x (in*27).
template <class T>
struct ConvParams {
  int in_channels = 0;
  int out_channels = 0;
  int kernel = 3;
  std::vector<T> weights;
  std::vector<T> bias;

  ConvParams() = default;
  ConvParams(int in, int out, int k) : in_channels(in), out_channels(out), kernel(k) {
    OFU_REQUIRE(in > 0 && out > 0, "ConvParams: channel counts must be positive");
    OFU_REQUIRE(k == 1 || k == 3, "ConvParams: kernel must be 1 or 3");
    weights.assign(static_cast<std::size_t>(out) * in * k * k * k, T(0));
    bias.assign(out, T(0));
  }

  int taps() const { return kernel * kernel * kernel; }
  std::size_t weight_count() const { return weights.size(); }
};

/// Gradients with the same shapes as the parameters they belong to.
template <class T>
struct ConvGrads {
  std::vector<T> weights;
  std::vector<T> bias;

  static ConvGrads zeros_like(const ConvParams<T>& p) {
    ConvGrads g;
    g.weights.assign(p.weights.size(), T(0));
    g.bias.assign(p.bias.size(), T(0));
    return g;
  }
  void add(const ConvGrads& o) {
    for (std::size_t i = 0; i < weights.size(); ++i) weights[i] += o.weights[i];
    for (std::size_t i = 0; i < bias.size(); ++i) bias[i] += o.bias[i];
  }
  void scale(T s) {
    for (T& w : weights) w *= s;
    for (T& b : bias) b *= s;
  }
};

namespace conv_detail {

// Per-thread scratch for the tree-local windows. The local block is the
// tree's 8^3 voxels plus a one-voxel halo (10^3), per channel; the summed
// volume is inclusive-prefix over it, in double to keep box-sum cancellation
// harmless.
template <class T>
struct Scratch {
  std::vector<T> local;       // [ci][10*10*10]
  std::vector<double> sat;    // [ci][11*11*11]
  std::vector<T> svec;        // (in*27) x leaves, column-major
  std::vector<T> out;         // out x leaves, column-major
  std::vector<double> cell_scale;
};

inline int local_idx(int x, int y, int z) { return (x * 10 + y) * 10 + z; }
inline int sat_idx(int x, int y, int z) { return (x * 11 + y) * 11 + z; }

/// Fills the 10^3 window (with halo) around tree t. Out-of-volume samples
/// are zero.
template <class T>
void fill_local(const GridOctree<T>& oct, std::int64_t t, const Vec3i& tree_origin,
                Scratch<T>& s) {
  const int n = oct.channels;
  s.local.assign(static_cast<std::size_t>(n) * 1000, T(0));

  // Interior: tile the tree's own leaves.
  oct_detail::for_each_tree_leaf(oct.trees[t], [&](int leaf, int, const Vec3i& lo, int edge) {
    const T* val = oct.leaf_data(oct.leaf_offset[t] + leaf);
    for (int ci = 0; ci < n; ++ci) {
      T* plane = s.local.data() + static_cast<std::size_t>(ci) * 1000;
      for (int dx = 0; dx < edge; ++dx)
        for (int dy = 0; dy < edge; ++dy)
          for (int dz = 0; dz < edge; ++dz)
            plane[local_idx(lo.x() + 1 + dx, lo.y() + 1 + dy, lo.z() + 1 + dz)] = val[ci];
    }
  });

  // Halo: one voxel beyond each face, queried from neighboring trees.
  const Vec3i res = oct.desc.resolution;
  auto sample = [&](int x, int y, int z) {
    const int gi = tree_origin.x() + x - 1;
    const int gj = tree_origin.y() + y - 1;
    const int gk = tree_origin.z() + z - 1;
    if (gi < 0 || gj < 0 || gk < 0 || gi >= res.x() || gj >= res.y() || gk >= res.z()) return;
    const T* val = oct.leaf_data(oct.leaf_of_voxel(gi, gj, gk));
    const int li = local_idx(x, y, z);
    for (int ci = 0; ci < n; ++ci) s.local[static_cast<std::size_t>(ci) * 1000 + li] = val[ci];
  };
  for (int y = 0; y < 10; ++y)
    for (int z = 0; z < 10; ++z) {
      sample(0, y, z);
      sample(9, y, z);
    }
  for (int x = 1; x < 9; ++x)
    for (int z = 0; z < 10; ++z) {
      sample(x, 0, z);
      sample(x, 9, z);
    }
  for (int x = 1; x < 9; ++x)
    for (int y = 1; y < 9; ++y) {
      sample(x, y, 0);
      sample(x, y, 9);
    }
}

/// Inclusive 3D prefix sums of the local window, one per channel.
template <class T>
void build_sat(Scratch<T>& s, int channels) {
  s.sat.assign(static_cast<std::size_t>(channels) * 11 * 11 * 11, 0.0);
  for (int ci = 0; ci < channels; ++ci) {
    const T* plane = s.local.data() + static_cast<std::size_t>(ci) * 1000;
    double* sat = s.sat.data() + static_cast<std::size_t>(ci) * 1331;
    for (int x = 1; x <= 10; ++x)
      for (int y = 1; y <= 10; ++y)
        for (int z = 1; z <= 10; ++z)
          sat[sat_idx(x, y, z)] = static_cast<double>(plane[local_idx(x - 1, y - 1, z - 1)]) +
                                  sat[sat_idx(x - 1, y, z)] + sat[sat_idx(x, y - 1, z)] +
                                  sat[sat_idx(x, y, z - 1)] - sat[sat_idx(x - 1, y - 1, z)] -
                                  sat[sat_idx(x - 1, y, z - 1)] - sat[sat_idx(x, y - 1, z - 1)] +
                                  sat[sat_idx(x - 1, y - 1, z - 1)];
  }
}

/// Box sum over local coords [x0,x0+e) x [y0,y0+e) x [z0,z0+e).
inline double box_sum(const double* sat, int x0, int y0, int z0, int e) {
  const int x1 = x0 + e, y1 = y0 + e, z1 = z0 + e;
  return sat[sat_idx(x1, y1, z1)] - sat[sat_idx(x0, y1, z1)] - sat[sat_idx(x1, y0, z1)] -
         sat[sat_idx(x1, y1, z0)] + sat[sat_idx(x0, y0, z1)] + sat[sat_idx(x0, y1, z0)] +
         sat[sat_idx(x1, y0, z0)] - sat[sat_idx(x0, y0, z0)];
}

/// Builds the per-leaf shifted-box-sum columns for one tree:
/// svec[ci*27+o, l] = sum of channel ci over leaf l's box shifted by offset o.
/// Returns the number of leaves. cell_scale[l] receives 1/voxels(l).
template <class T>
int build_columns(const GridOctree<T>& oct, std::int64_t t, const Vec3i& tree_origin,
                  Scratch<T>& s) {
  const int n = oct.channels;
  fill_local(oct, t, tree_origin, s);

  const TreeBits& bits = oct.trees[t];
  const int leaves = bits.leaf_count();
  const int rows = n * 27;
  s.svec.resize(static_cast<std::size_t>(rows) * leaves);
  s.cell_scale.resize(leaves);

  bool need_sat = false;
  oct_detail::for_each_tree_leaf(bits, [&](int, int, const Vec3i&, int edge) {
    if (edge > 1) need_sat = true;
  });
  if (need_sat) build_sat(s, n);

  oct_detail::for_each_tree_leaf(bits, [&](int leaf, int, const Vec3i& lo, int edge) {
    T* col = s.svec.data() + static_cast<std::size_t>(leaf) * rows;
    s.cell_scale[leaf] = 1.0 / (static_cast<double>(edge) * edge * edge);
    if (edge == 1) {
      for (int ci = 0; ci < n; ++ci) {
        const T* plane = s.local.data() + static_cast<std::size_t>(ci) * 1000;
        T* dst = col + ci * 27;
        for (int ox = 0; ox < 3; ++ox)
          for (int oy = 0; oy < 3; ++oy)
            for (int oz = 0; oz < 3; ++oz)
              dst[(ox * 3 + oy) * 3 + oz] =
                  plane[local_idx(lo.x() + ox, lo.y() + oy, lo.z() + oz)];
      }
    } else {
      for (int ci = 0; ci < n; ++ci) {
        const double* sat = s.sat.data() + static_cast<std::size_t>(ci) * 1331;
        T* dst = col + ci * 27;
        for (int ox = 0; ox < 3; ++ox)
          for (int oy = 0; oy < 3; ++oy)
            for (int oz = 0; oz < 3; ++oz)
              dst[(ox * 3 + oy) * 3 + oz] = static_cast<T>(
                  box_sum(sat, lo.x() + ox, lo.y() + oy, lo.z() + oz, edge));
      }
    }
  });
  return leaves;
}

template <class T>
using MatMap = Eigen::Map<Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic>>;
template <class T>
using ConstMatMap = Eigen::Map<const Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic>>;
template <class T>
using ConstRowMatMap =
    Eigen::Map<const Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>>;

/// Shared linear kernel: per leaf, out[:, l] = Wmat * svec(l), optionally
/// scaled by the cell mean and offset by a bias. Wmat is (rows x in*27),
/// row-major.
template <class T>
GridOctree<T> apply_taps(const GridOctree<T>& input, const T* wmat, int rows, bool cell_mean,
                         const T* bias) {
  GridOctree<T> out = input;
  out.channels = rows;
  out.features.assign(static_cast<std::size_t>(out.total_leaves()) * rows, T(0));
  const int cols = input.channels * 27;

#ifdef _OPENMP
#pragma omp parallel
#endif
  {
    Scratch<T> scratch;
#ifdef _OPENMP
#pragma omp for schedule(dynamic, 4)
#endif
    for (std::int64_t t = 0; t < input.tree_count(); ++t) {
      const int tx = static_cast<int>(t / (input.grid_dims.y() * input.grid_dims.z()));
      const int ty = static_cast<int>((t / input.grid_dims.z()) % input.grid_dims.y());
      const int tz = static_cast<int>(t % input.grid_dims.z());
      const int leaves = build_columns(input, t, Vec3i(8 * tx, 8 * ty, 8 * tz), scratch);

      scratch.out.resize(static_cast<std::size_t>(rows) * leaves);
      ConstRowMatMap<T> W(wmat, rows, cols);
      ConstMatMap<T> S(scratch.svec.data(), cols, leaves);
      MatMap<T> O(scratch.out.data(), rows, leaves);
      O.noalias() = W * S;

      T* dst = out.features.data() + out.leaf_offset[t] * rows;
      for (int l = 0; l < leaves; ++l) {
        const T scale = cell_mean ? static_cast<T>(scratch.cell_scale[l]) : T(1);
        for (int co = 0; co < rows; ++co) {
          T v = O(co, l) * scale;
          if (bias) v += bias[co];
          dst[static_cast<std::size_t>(l) * rows + co] = v;
        }
      }
    }
  }
  return out;
}

}  // namespace conv_detail

/// 3x3x3 convolution on the grid-octree, structure preserving: each leaf
/// receives the mean over its voxels of the dense convolution of the
/// voxel-expanded input, zero-padded at the volume boundary.
template <class T>
GridOctree<T> oct_conv3(const GridOctree<T>& input, const ConvParams<T>& params) {
  OFU_REQUIRE(params.kernel == 3, "oct_conv3: expected a 3x3x3 kernel");
  OFU_REQUIRE(input.channels == params.in_channels, "oct_conv3: channel mismatch");
  return conv_detail::apply_taps(input, params.weights.data(), params.out_channels, true,
                                 params.bias.data());
}

/// Gradient of oct_conv3 with respect to its input. grad_out is aligned with
/// the op's output features.
template <class T>
GridOctree<T> oct_conv3_backward_input(const GridOctree<T>& input, const ConvParams<T>& params,
                                       const std::vector<T>& grad_out) {
  const int n_out = params.out_channels;
  const int n_in = params.in_channels;

  // z: upstream gradient divided by each cell's voxel count (the adjoint of
  // the per-cell mean), shaped like the op output.
  GridOctree<T> z = input;
  z.channels = n_out;
  z.features.resize(static_cast<std::size_t>(z.total_leaves()) * n_out);
  parallel_for_each_cell(z, [&](std::int64_t, const CellRef& cell) {
    const double inv = 1.0 / (static_cast<double>(cell.edge) * cell.edge * cell.edge);
    for (int c = 0; c < n_out; ++c)
      z.leaf_data(cell.leaf)[c] =
          static_cast<T>(grad_out[cell.leaf * n_out + c] * inv);
  });

  // Transposed kernel: W'[ci][co*27 + o] = W[co][ci][26 - o].
  std::vector<T> wt(static_cast<std::size_t>(n_in) * n_out * 27);
  for (int ci = 0; ci < n_in; ++ci)
    for (int co = 0; co < n_out; ++co)
      for (int o = 0; o < 27; ++o)
        wt[(static_cast<std::size_t>(ci) * n_out + co) * 27 + o] =
            params.weights[(static_cast<std::size_t>(co) * n_in + ci) * 27 + (26 - o)];

  // The input gradient of leaf D is the plain box sum (no mean) of the
  // transposed convolution of z.
  return conv_detail::apply_taps(z, wt.data(), n_in, false, static_cast<const T*>(nullptr));
}

/// Gradients of oct_conv3 with respect to weights and bias. Accumulation is
/// chunked over trees and merged in chunk order, so results do not depend on
/// thread count.
template <class T>
ConvGrads<T> oct_conv3_backward_params(const GridOctree<T>& input, const ConvParams<T>& params,
                                       const std::vector<T>& grad_out) {
  const int n_out = params.out_channels;
  const int n_in = params.in_channels;
  const int cols = n_in * 27;
  constexpr int kChunks = 16;

  std::vector<std::vector<double>> dw_chunk(kChunks);
  std::vector<std::vector<double>> db_chunk(kChunks);

  const std::int64_t trees = input.tree_count();
  const std::int64_t per = (trees + kChunks - 1) / kChunks;
#ifdef _OPENMP
#pragma omp parallel
#endif
  {
    conv_detail::Scratch<T> scratch;
#ifdef _OPENMP
#pragma omp for schedule(dynamic, 1)
#endif
    for (int chunk = 0; chunk < kChunks; ++chunk) {
      const std::int64_t lo = chunk * per;
      if (lo >= trees) continue;
      const std::int64_t hi = std::min(trees, lo + per);
      auto& dw = dw_chunk[chunk];
      auto& db = db_chunk[chunk];
      dw.assign(static_cast<std::size_t>(n_out) * cols, 0.0);
      db.assign(n_out, 0.0);
      for (std::int64_t t = lo; t < hi; ++t) {
        const int tx = static_cast<int>(t / (input.grid_dims.y() * input.grid_dims.z()));
        const int ty = static_cast<int>((t / input.grid_dims.z()) % input.grid_dims.y());
        const int tz = static_cast<int>(t % input.grid_dims.z());
        const int leaves =
            conv_detail::build_columns(input, t, Vec3i(8 * tx, 8 * ty, 8 * tz), scratch);
        const T* g = grad_out.data() + input.leaf_offset[t] * n_out;
        for (int l = 0; l < leaves; ++l) {
          const double inv = scratch.cell_scale[l];
          const T* col = scratch.svec.data() + static_cast<std::size_t>(l) * cols;
          for (int co = 0; co < n_out; ++co) {
            const double gz = static_cast<double>(g[static_cast<std::size_t>(l) * n_out + co]);
            db[co] += gz;
            const double zval = gz * inv;
            if (zval == 0.0) continue;
            double* dwrow = dw.data() + static_cast<std::size_t>(co) * cols;
            for (int r = 0; r < cols; ++r) dwrow[r] += zval * static_cast<double>(col[r]);
          }
        }
      }
    }
  }

  ConvGrads<T> grads = ConvGrads<T>::zeros_like(params);
  std::vector<double> dw_total(static_cast<std::size_t>(n_out) * cols, 0.0);
  std::vector<double> db_total(n_out, 0.0);
  for (int chunk = 0; chunk < kChunks; ++chunk) {
    if (dw_chunk[chunk].empty()) continue;
    for (std::size_t i = 0; i < dw_total.size(); ++i) dw_total[i] += dw_chunk[chunk][i];
    for (int i = 0; i < n_out; ++i) db_total[i] += db_chunk[chunk][i];
  }
  for (std::size_t i = 0; i < dw_total.size(); ++i) grads.weights[i] = static_cast<T>(dw_total[i]);
  for (int i = 0; i < n_out; ++i) grads.bias[i] = static_cast<T>(db_total[i]);
  return grads;
}

// ---------------------------------------------------------------------------
// 1x1x1 convolution: a per-leaf linear map. Used by reconstruction heads.
// ---------------------------------------------------------------------------

template <class T>
GridOctree<T> conv1x1(const GridOctree<T>& input, const ConvParams<T>& params) {
  OFU_REQUIRE(params.kernel == 1, "conv1x1: expected a 1x1x1 kernel");
  OFU_REQUIRE(input.channels == params.in_channels, "conv1x1: channel mismatch");
  GridOctree<T> out = input;
  out.channels = params.out_channels;
  out.features.assign(static_cast<std::size_t>(out.total_leaves()) * params.out_channels, T(0));
  conv_detail::ConstRowMatMap<T> W(params.weights.data(), params.out_channels,
                                   params.in_channels);
  out.feature_matrix().noalias() = input.feature_matrix() * W.transpose();
  out.feature_matrix().rowwise() +=
      Eigen::Map<const Eigen::Matrix<T, 1, Eigen::Dynamic>>(params.bias.data(),
                                                            params.out_channels);
  return out;
}

template <class T>
GridOctree<T> conv1x1_backward_input(const GridOctree<T>& input, const ConvParams<T>& params,
                                     const std::vector<T>& grad_out) {
  GridOctree<T> dx = input;
  dx.features.assign(input.features.size(), T(0));
  conv_detail::ConstRowMatMap<T> W(params.weights.data(), params.out_channels,
                                   params.in_channels);
  conv_detail::ConstRowMatMap<T> G(grad_out.data(), input.total_leaves(), params.out_channels);
  dx.feature_matrix().noalias() = G * W;
  return dx;
}

template <class T>
ConvGrads<T> conv1x1_backward_params(const GridOctree<T>& input, const ConvParams<T>& params,
                                     const std::vector<T>& grad_out) {
  ConvGrads<T> grads = ConvGrads<T>::zeros_like(params);
  conv_detail::ConstRowMatMap<T> G(grad_out.data(), input.total_leaves(), params.out_channels);
  Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor> dw =
      G.transpose() * input.feature_matrix();
  Eigen::Matrix<T, Eigen::Dynamic, 1> db = G.colwise().sum().transpose();
  std::copy(dw.data(), dw.data() + dw.size(), grads.weights.begin());
  std::copy(db.data(), db.data() + db.size(), grads.bias.begin());
  return grads;
}

// ---------------------------------------------------------------------------
// Dense 3x3x3 convolution, zero padded. Reference operator for equivalence
// tests' production-side checks and the benchmark baseline.
// ---------------------------------------------------------------------------

template <class T>
DenseVolume<T> dense_conv3(const DenseVolume<T>& x, const ConvParams<T>& params) {
  OFU_REQUIRE(params.kernel == 3 && x.channels == params.in_channels,
              "dense_conv3: shape mismatch");
  const Vec3i r = x.desc.resolution;
  DenseVolume<T> y(x.desc, params.out_channels);
  parallel_for(static_cast<std::int64_t>(r.x()), [&](std::int64_t i) {
    for (int j = 0; j < r.y(); ++j)
      for (int k = 0; k < r.z(); ++k)
        for (int co = 0; co < params.out_channels; ++co) {
          double acc = params.bias[co];
          for (int ci = 0; ci < params.in_channels; ++ci) {
            const T* w =
                params.weights.data() + (static_cast<std::size_t>(co) * params.in_channels + ci) * 27;
            for (int ox = 0; ox < 3; ++ox) {
              const int ii = static_cast<int>(i) + ox - 1;
              if (ii < 0 || ii >= r.x()) continue;
              for (int oy = 0; oy < 3; ++oy) {
                const int jj = j + oy - 1;
                if (jj < 0 || jj >= r.y()) continue;
                for (int oz = 0; oz < 3; ++oz) {
                  const int kk = k + oz - 1;
                  if (kk < 0 || kk >= r.z()) continue;
                  acc += static_cast<double>(w[(ox * 3 + oy) * 3 + oz]) * x.at(ci, ii, jj, kk);
                }
              }
            }
          }
          y.at(co, static_cast<int>(i), j, k) = static_cast<T>(acc);
        }
  });
  return y;
}

}  // namespace ofu
