#pragma once

#include "ofu/fusion.hpp"
#include "ofu/nn/adam.hpp"
#include "ofu/nn/tape.hpp"

namespace ofu {

// ---------------------------------------------------------------------------
// One pyramid stage: a U-shaped encoder-decoder over the grid-octree plus a
// reconstruction head. Channel widths double at each pooling and halve after
// each unpooling:
//   in -> conv(w) -> pool -> conv(2w) -> pool -> conv(4w)
//      -> unpool+skip -> conv(2w) -> unpool+skip -> conv(w) -> head(1)
// All 3x3x3 convolutions are followed by a ReLU; heads are linear (TSDF,
// scaled to the truncation band and clamped) or sigmoid (occupancy).
// ---------------------------------------------------------------------------

template <class T>
struct StageNetwork {
  int level = 0;
  FieldKind output_kind = FieldKind::TSDF;
  int input_channels = 0;
  int width = 16;
  ConvParams<T> conv1, conv2, conv3, conv4, conv5, head;

  static StageNetwork make(int level, int input_channels, FieldKind kind, int width = 16) {
    StageNetwork s;
    s.level = level;
    s.output_kind = kind;
    s.input_channels = input_channels;
    s.width = width;
    const int w = width;
    s.conv1 = ConvParams<T>(input_channels, w, 3);
    s.conv2 = ConvParams<T>(w, 2 * w, 3);
    s.conv3 = ConvParams<T>(2 * w, 4 * w, 3);
    s.conv4 = ConvParams<T>(4 * w + 2 * w, 2 * w, 3);
    s.conv5 = ConvParams<T>(2 * w + w, w, 3);
    s.head = ConvParams<T>(w, 1, 1);
    s.check_channel_arithmetic();
    return s;
  }

  /// Encoder doubles feature maps at each pooling; decoder halves after each
  /// unpooling; skip concatenations must line up.
  void check_channel_arithmetic() const {
    OFU_REQUIRE(conv2.out_channels == 2 * conv1.out_channels &&
                    conv3.out_channels == 2 * conv2.out_channels,
                "StageNetwork: encoder must double channels at each pooling");
    OFU_REQUIRE(conv4.out_channels * 2 == conv3.out_channels &&
                    conv5.out_channels * 2 == conv4.out_channels,
                "StageNetwork: decoder must halve channels after each unpooling");
    OFU_REQUIRE(conv4.in_channels == conv3.out_channels + conv2.out_channels &&
                    conv5.in_channels == conv4.out_channels + conv1.out_channels,
                "StageNetwork: skip concatenation channel mismatch");
    OFU_REQUIRE(head.in_channels == conv5.out_channels && head.out_channels == 1,
                "StageNetwork: head must map features to one channel");
  }

  std::vector<ConvParams<T>*> parameters() {
    return {&conv1, &conv2, &conv3, &conv4, &conv5, &head};
  }
  std::vector<const ConvParams<T>*> parameters() const {
    return {&conv1, &conv2, &conv3, &conv4, &conv5, &head};
  }

  /// He-style initialization: weights ~ N(0, sqrt(2 / fan_in)), zero biases.
  void init_he(Rng& rng) {
    for (ConvParams<T>* p : parameters()) {
      const double std = std::sqrt(2.0 / (static_cast<double>(p->in_channels) * p->taps()));
      for (T& w : p->weights) w = static_cast<T>(std * rng.normal());
      std::fill(p->bias.begin(), p->bias.end(), T(0));
    }
  }

  /// Warm start from the previous stage: copy tensors whose shapes match,
  /// He-initialize the rest (typically conv1, whose input width differs).
  void init_from(const StageNetwork& prev, Rng& rng) {
    init_he(rng);
    auto dst = parameters();
    auto src = prev.parameters();
    for (std::size_t i = 0; i < dst.size(); ++i) {
      if (dst[i]->weights.size() == src[i]->weights.size() &&
          dst[i]->bias.size() == src[i]->bias.size()) {
        dst[i]->weights = src[i]->weights;
        dst[i]->bias = src[i]->bias;
      }
    }
  }
};

/// One executed stage: the tape owns all activations; node ids point at the
/// decoder features and the reconstruction.
template <class T>
struct StageRun {
  Tape<T> tape;
  int features_node = -1;
  int recon_node = -1;
};

/// Runs a stage on an input octree (normalized channels). For TSDF output the
/// head's linear response is scaled by tau, keeping weights O(1), and clamped
/// to the truncation band; for occupancy it passes through a sigmoid.
template <class T>
StageRun<T> run_stage(StageNetwork<T>& stage, GridOctree<T> input, T tau) {
  OFU_REQUIRE(input.channels == stage.input_channels, "run_stage: input channel mismatch");
  StageRun<T> run;
  Tape<T>& tp = run.tape;
  const int x = tp.input(std::move(input));
  const int a1 = tp.relu(tp.conv3(x, &stage.conv1));
  const int p1 = tp.pool(a1);
  const int a2 = tp.relu(tp.conv3(p1, &stage.conv2));
  const int p2 = tp.pool(a2);
  const int a3 = tp.relu(tp.conv3(p2, &stage.conv3));
  const int u1 = tp.unpool_to(a3, a2);
  const int c1 = tp.concat(u1, a2);
  const int a4 = tp.relu(tp.conv3(c1, &stage.conv4));
  const int u2 = tp.unpool_to(a4, a1);
  const int c2 = tp.concat(u2, a1);
  const int f = tp.relu(tp.conv3(c2, &stage.conv5));
  run.features_node = f;
  const int h = tp.conv1x1_node(f, &stage.head);
  if (stage.output_kind == FieldKind::TSDF)
    run.recon_node = tp.clamp_sym(tp.scale(h, tau), tau);
  else
    run.recon_node = tp.sigmoid(h);
  return run;
}

// ---------------------------------------------------------------------------
// Structure module: predicts the split mask from the reconstruction, doubles
// the resolution of features+reconstruction and subdivides masked cells. The
// surface is the zero-levelset for TSDF regression (cells with |R| < tau
// split) and the thresholded gradient magnitude for occupancy.
// ---------------------------------------------------------------------------

template <class T>
SplitMask tsdf_split_mask(const GridOctree<T>& recon, T tau) {
  SplitMask mask(recon.total_leaves());
  parallel_for(recon.total_leaves(), [&](std::int64_t l) {
    mask[l] = std::abs(recon.features[l]) < tau ? 1 : 0;
  });
  return mask;
}

/// Occupancy surface detection: voxels where the forward-difference gradient
/// magnitude of R exceeds the threshold, dilated by the given radius (in
/// voxels); a leaf is masked if it contains any flagged voxel.
template <class T>
SplitMask occupancy_split_mask(const GridOctree<T>& recon, int dilation_voxels,
                               double threshold = 0.1) {
  const DenseVolume<T> r = to_dense(recon);
  const Vec3i res = r.desc.resolution;
  std::vector<std::uint8_t> flag(r.voxel_count(), 0);
  parallel_for(r.voxel_count(), [&](std::int64_t v) {
    const int i = static_cast<int>(v / (res.y() * res.z()));
    const int j = static_cast<int>((v / res.z()) % res.y());
    const int k = static_cast<int>(v % res.z());
    const double c = r.at(0, v);
    const double gx = i + 1 < res.x() ? r.at(0, i + 1, j, k) - c : 0.0;
    const double gy = j + 1 < res.y() ? r.at(0, i, j + 1, k) - c : 0.0;
    const double gz = k + 1 < res.z() ? r.at(0, i, j, k + 1) - c : 0.0;
    flag[v] = std::sqrt(gx * gx + gy * gy + gz * gz) > threshold ? 1 : 0;
  });
  for (int pass = 0; pass < dilation_voxels; ++pass) {
    std::vector<std::uint8_t> next = flag;
    parallel_for(r.voxel_count(), [&](std::int64_t v) {
      if (flag[v]) return;
      const int i = static_cast<int>(v / (res.y() * res.z()));
      const int j = static_cast<int>((v / res.z()) % res.y());
      const int k = static_cast<int>(v % res.z());
      for (int di = -1; di <= 1 && !next[v]; ++di)
        for (int dj = -1; dj <= 1 && !next[v]; ++dj)
          for (int dk = -1; dk <= 1 && !next[v]; ++dk)
            if (r.desc.in_range(i + di, j + dj, k + dk) &&
                flag[r.desc.linear_index(i + di, j + dj, k + dk)])
              next[v] = 1;
    });
    flag.swap(next);
  }
  SplitMask mask(recon.total_leaves(), 0);
  for_each_cell(recon, [&](const CellRef& cell) {
    for (int dx = 0; dx < cell.edge && !mask[cell.leaf]; ++dx)
      for (int dy = 0; dy < cell.edge && !mask[cell.leaf]; ++dy)
        for (int dz = 0; dz < cell.edge && !mask[cell.leaf]; ++dz)
          if (flag[r.desc.linear_index(cell.origin.x() + dx, cell.origin.y() + dy,
                                       cell.origin.z() + dz)])
            mask[cell.leaf] = 1;
  });
  return mask;
}

/// Carries a per-leaf mask through the canonical unpooling (output leaves
/// inherit their source leaf's flag).
template <class T>
SplitMask transfer_mask_through_unpool(const GridOctree<T>& input, const GridOctree<T>& output,
                                       const SplitMask& mask) {
  SplitMask out(output.total_leaves(), 0);
  parallel_for_each_cell(output, [&](std::int64_t, const CellRef& cell) {
    const Vec3i g = cell.origin / 2;
    out[cell.leaf] = mask[input.leaf_of_voxel(g.x(), g.y(), g.z())];
  });
  return out;
}

template <class T>
struct StructureModuleResult {
  FusionField<T> recon;     // reconstruction at the current resolution
  SplitMask mask;           // split decision per current-level leaf
  GridOctree<T> next_base;  // unpooled features (+R channel), masked cells split
};

/// Applies the structure module to a finished stage. The next level's input
/// is next_base concatenated with that level's (projected, normalized)
/// measurement encoding.
template <class T>
StructureModuleResult<T> structure_module(const StageRun<T>& run, FieldKind kind, T tau,
                                          int tau_voxels) {
  const GridOctree<T>& features = run.tape.value(run.features_node);
  const GridOctree<T>& recon = run.tape.value(run.recon_node);

  StructureModuleResult<T> result;
  result.mask = kind == FieldKind::TSDF ? tsdf_split_mask(recon, tau)
                                        : occupancy_split_mask(recon, tau_voxels);

  GridOctree<T> recon_norm = recon;
  if (kind == FieldKind::TSDF)
    for (T& v : recon_norm.features) v /= tau;
  const GridOctree<T> merged = oct_concat(features, recon_norm);
  const GridOctree<T> up = oct_unpool(merged);
  result.next_base = split_cells(up, transfer_mask_through_unpool(merged, up, result.mask));
  result.recon = FusionField<T>(kind, kind == FieldKind::TSDF ? tau : T(1), recon);
  return result;
}

// ---------------------------------------------------------------------------
// Coarse-to-fine pyramid.
// ---------------------------------------------------------------------------

template <class T>
struct PyramidNetwork {
  FieldKind output_kind = FieldKind::TSDF;
  EncodingKind encoding = EncodingKind::TSDF1D;
  int width = 16;
  int tau_voxels = 4;
  std::vector<StageNetwork<T>> stages;
  std::vector<T> tau_per_level;  // meters, tau_voxels * voxel size per level

  static PyramidNetwork make(int levels, const VolumeDesc& coarsest, EncodingKind enc,
                             FieldKind kind, int width = 16, int tau_voxels = 4) {
    OFU_REQUIRE(levels >= 1, "PyramidNetwork: need at least one level");
    PyramidNetwork net;
    net.output_kind = kind;
    net.encoding = enc;
    net.width = width;
    net.tau_voxels = tau_voxels;
    const int enc_ch = encoding_channels(enc);
    VolumeDesc desc = coarsest;
    for (int l = 0; l < levels; ++l) {
      const int in_ch = l == 0 ? enc_ch : width + 1 + enc_ch;
      net.stages.push_back(StageNetwork<T>::make(l, in_ch, kind, width));
      net.tau_per_level.push_back(static_cast<T>(tau_voxels * desc.voxel_size));
      desc = desc.finer();
    }
    return net;
  }

  std::vector<ConvParams<T>*> all_parameters() {
    std::vector<ConvParams<T>*> out;
    for (auto& s : stages)
      for (ConvParams<T>* p : s.parameters()) out.push_back(p);
    return out;
  }
};

/// Per-level measurements: the raw encoding at that level's resolution plus
/// the shared observed-voxel mask.
template <class T>
struct LevelInput {
  VolumeDesc desc;
  T tau = T(0);
  DenseVolume<T> encoding;  // raw units (meters for metric channels)
  DenseVolume<std::uint8_t> observed;
};

/// Computes the encodings of the given views at every pyramid level
/// (coarsest first).
template <class T = float>
std::vector<LevelInput<T>> build_level_inputs(const std::vector<DepthView>& views,
                                              const VolumeDesc& coarsest, int levels,
                                              EncodingKind kind, int tau_voxels = 4) {
  std::vector<LevelInput<T>> out;
  VolumeDesc desc = coarsest;
  for (int l = 0; l < levels; ++l) {
    LevelInput<T> li;
    li.desc = desc;
    li.tau = static_cast<T>(tau_voxels * desc.voxel_size);
    TsdfEncoding<T> tsdf = encode_tsdf<T>(views, desc, li.tau);
    li.observed = std::move(tsdf.observed);
    if (kind == EncodingKind::TSDF1D) {
      li.encoding = std::move(tsdf.tsdf);
    } else {
      EncodingSpec spec;
      spec.kind = kind;
      spec.truncation = li.tau;
      li.encoding = encode<T>(spec, views, desc);
    }
    out.push_back(std::move(li));
    desc = desc.finer();
  }
  return out;
}

/// Metric channels are scaled into truncation units so every level's inputs
/// live on the same O(1) scale.
template <class T>
DenseVolume<T> normalize_encoding(EncodingKind kind, const DenseVolume<T>& enc, T tau) {
  DenseVolume<T> out = enc;
  const T inv = T(1) / tau;
  switch (kind) {
    case EncodingKind::TSDF1D:
      for (T& v : out.data) v *= inv;
      break;
    case EncodingKind::TDFOcc2D:
      out.channel(0) *= inv;
      break;
    default:
      break;
  }
  return out;
}

/// Coarsest-level input octree: structure from the informative region of the
/// measurements, features from the normalized encoding.
template <class T>
GridOctree<T> build_stage0_input(const LevelInput<T>& li, EncodingKind kind) {
  const DenseVolume<T>& enc = li.encoding;
  const T band = li.tau * static_cast<T>(1.0 - 1e-6);
  auto pred = [&](int i, int j, int k) -> bool {
    switch (kind) {
      case EncodingKind::TSDF1D:
        return li.observed.at(0, i, j, k) && std::abs(enc.at(0, i, j, k)) < band;
      case EncodingKind::TDFOcc2D:
        return li.observed.at(0, i, j, k) && enc.at(0, i, j, k) < band;
      case EncodingKind::Histogram10D: {
        if (!li.observed.at(0, i, j, k)) return false;
        for (int c = 1; c <= 8; ++c)
          if (enc.at(c, i, j, k) > T(0)) return true;
        return false;
      }
      case EncodingKind::Occupancy1D:
        return enc.at(0, i, j, k) > T(0.5);
    }
    return true;
  };
  const DenseVolume<T> norm = normalize_encoding(kind, enc, li.tau);
  GridOctree<T> structure = from_dense(norm, pred);
  return structure;
}

template <class T>
struct PyramidRun {
  std::vector<FusionField<T>> recons;       // one per level, octree-backed
  std::vector<StageRun<T>> stage_runs;      // tapes (cleared unless kept)
  std::vector<GridOctree<T>> stage_inputs;  // normalized input per executed stage
};

/// Coarse-to-fine forward pass. Runs stages [0, max_stage]; max_stage < 0
/// means all. When keep_tapes is false only the last executed stage's tape is
/// retained (enough for training that stage while earlier stages run in
/// inference mode).
template <class T>
PyramidRun<T> pyramid_forward(PyramidNetwork<T>& net, const std::vector<LevelInput<T>>& levels,
                              int max_stage = -1, bool keep_tapes = false) {
  OFU_REQUIRE(!net.stages.empty(), "pyramid_forward: empty network");
  const int last = max_stage < 0 ? static_cast<int>(net.stages.size()) - 1 : max_stage;
  OFU_REQUIRE(last < static_cast<int>(net.stages.size()), "pyramid_forward: stage out of range");
  OFU_REQUIRE(static_cast<int>(levels.size()) >= last + 1, "pyramid_forward: missing level inputs");

  PyramidRun<T> run;
  GridOctree<T> x = build_stage0_input(levels[0], net.encoding);
  for (int l = 0; l <= last; ++l) {
    OFU_REQUIRE(x.desc == levels[l].desc, "pyramid_forward: level descriptor mismatch");
    run.stage_inputs.push_back(x);
    StageRun<T> sr = run_stage(net.stages[l], std::move(x), net.tau_per_level[l]);
    if (l < last) {
      StructureModuleResult<T> sm =
          structure_module(sr, net.output_kind, net.tau_per_level[l], net.tau_voxels);
      run.recons.push_back(std::move(sm.recon));
      const DenseVolume<T> enc_norm =
          normalize_encoding(net.encoding, levels[l + 1].encoding, levels[l + 1].tau);
      x = oct_concat(sm.next_base, project_dense_onto(enc_norm, sm.next_base));
      if (!keep_tapes) sr.tape.nodes.clear();
      run.stage_runs.push_back(std::move(sr));
    } else {
      run.recons.push_back(FusionField<T>(
          net.output_kind, net.output_kind == FieldKind::TSDF ? net.tau_per_level[l] : T(1),
          sr.tape.value(sr.recon_node)));
      run.stage_runs.push_back(std::move(sr));
    }
  }
  return run;
}

}  // namespace ofu
