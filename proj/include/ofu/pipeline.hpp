#pragma once

#include "ofu/datagen.hpp"
#include "ofu/metrics.hpp"
#include "ofu/nn/train.hpp"
#include "ofu/tvl1.hpp"

namespace ofu {

// ---------------------------------------------------------------------------
// Glue between the dataset on disk and the fusion methods: sample loading,
// whole-pipeline inference, per-method evaluation.
// ---------------------------------------------------------------------------

/// Resolutions the pyramid runs at, taken from the dataset manifest but
/// restricted to the first `levels` entries.
inline std::vector<int> pyramid_resolutions(const Dataset& ds, int levels) {
  OFU_REQUIRE(levels >= 1 && levels <= static_cast<int>(ds.config.resolutions.size()),
              "pyramid_resolutions: level count outside dataset resolutions");
  return {ds.config.resolutions.begin(), ds.config.resolutions.begin() + levels};
}

/// Loads one scene as a training sample: per-level encodings of its stored
/// (noisy) views plus dense per-level ground truth.
template <class T = float>
TrainSample<T> load_train_sample(const Dataset& ds, const SceneEntry& entry, EncodingKind kind,
                                 int levels, FieldKind output_kind = FieldKind::TSDF,
                                 int view_limit = -1) {
  const int views = view_limit > 0 ? std::min(view_limit, ds.config.views) : ds.config.views;
  const std::vector<DepthView> depth = load_scene_views(entry, views);
  const std::vector<int> res = pyramid_resolutions(ds, levels);
  TrainSample<T> sample;
  sample.levels = build_level_inputs<T>(depth, scene_volume(res[0], ds.config.extent), levels,
                                        kind, static_cast<int>(ds.config.tau_voxels));
  for (const int r : res) {
    DenseVolume<float> gt = load_scene_gt(entry, r);
    if (output_kind == FieldKind::Occupancy) {
      // Occupied = non-positive signed distance.
      DenseVolume<float> occ(gt.desc, 1);
      for (std::int64_t v = 0; v < gt.voxel_count(); ++v)
        occ.at(0, v) = gt.at(0, v) <= 0.0f ? 1.0f : 0.0f;
      gt = std::move(occ);
    }
    if constexpr (std::is_same_v<T, float>)
      sample.gt.push_back(std::move(gt));
    else
      sample.gt.push_back(gt.template cast<T>());
  }
  return sample;
}

template <class T = float>
SampleLoader<T> make_sample_loader(const Dataset& ds, std::vector<SceneEntry> entries,
                                   EncodingKind kind, int levels,
                                   FieldKind output_kind = FieldKind::TSDF, int view_limit = -1) {
  return [&ds, entries = std::move(entries), kind, levels, output_kind,
          view_limit](int i) -> TrainSample<T> {
    return load_train_sample<T>(ds, entries.at(i), kind, levels, output_kind, view_limit);
  };
}

/// Runs the trained pyramid on a set of views; returns the finest-level
/// reconstruction.
template <class T = float>
FusionField<T> fuse_with_network(PyramidNetwork<T>& net, const std::vector<DepthView>& views,
                                 const VolumeDesc& coarsest) {
  set_pyramid_geometry(net, coarsest, net.tau_voxels);
  const auto levels = build_level_inputs<T>(views, coarsest, static_cast<int>(net.stages.size()),
                                            net.encoding, net.tau_voxels);
  PyramidRun<T> run = pyramid_forward(net, levels);
  return std::move(run.recons.back());
}

/// Finest-level octree structure statistics of a pyramid run.
template <class T>
double finest_leaf_fraction(const PyramidRun<T>& run) {
  const GridOctree<T>& oct = run.recons.back().octree();
  return static_cast<double>(oct.total_leaves()) / static_cast<double>(oct.desc.voxel_count());
}

}  // namespace ofu
