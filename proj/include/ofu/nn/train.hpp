#pragma once

#include "ofu/nn/checkpoint.hpp"
#include "ofu/nn/loss.hpp"

#include <functional>

namespace ofu {

/// Coarse-to-fine training schedule: stage k trains for epochs_per_stage[k]
/// epochs while earlier stages run in inference mode. Gradients accumulate
/// over grad_accum scenes per optimizer step.
struct TrainSchedule {
  std::vector<int> epochs_per_stage = {50, 25};
  double lr = 1e-4;
  int grad_accum = 4;
  std::uint64_t seed = 0;
};

/// One training scene: the per-level measurement encodings and the per-level
/// dense ground truth (meters for TSDF, {0,1} for occupancy).
template <class T>
struct TrainSample {
  std::vector<LevelInput<T>> levels;
  std::vector<DenseVolume<T>> gt;
};

template <class T>
using SampleLoader = std::function<TrainSample<T>(int)>;

/// Called after every epoch with (stage, epoch, mean sample loss, state);
/// returning false stops training early. The passed state is complete enough
/// to resume from the following epoch.
template <class T>
using EpochCallback =
    std::function<bool(int stage, int epoch, double loss, const TrainState<T>& state)>;

namespace train_detail {

/// Inference through stages [0, stage) to produce the stage's input octree.
template <class T>
GridOctree<T> build_stage_input(PyramidNetwork<T>& net, const std::vector<LevelInput<T>>& levels,
                                int stage) {
  GridOctree<T> x = build_stage0_input(levels[0], net.encoding);
  for (int l = 0; l < stage; ++l) {
    StageRun<T> sr = run_stage(net.stages[l], std::move(x), net.tau_per_level[l]);
    StructureModuleResult<T> sm =
        structure_module(sr, net.output_kind, net.tau_per_level[l], net.tau_voxels);
    const DenseVolume<T> enc_norm =
        normalize_encoding(net.encoding, levels[l + 1].encoding, levels[l + 1].tau);
    x = oct_concat(sm.next_base, project_dense_onto(enc_norm, sm.next_base));
  }
  return x;
}

template <class T>
std::vector<int> epoch_order(std::uint64_t seed, int stage, int epoch, int n) {
  std::vector<int> order(n);
  for (int i = 0; i < n; ++i) order[i] = i;
  Rng rng(mix_seed(seed, 0x5eed0000ull + static_cast<std::uint64_t>(stage) * 1000003u + epoch));
  for (int i = n - 1; i > 0; --i) std::swap(order[i], order[rng.uniform_int(0, i)]);
  return order;
}

}  // namespace train_detail

/// Trains the pyramid stage by stage. Stage 0 is He-initialized from the
/// schedule seed; later stages start from the previous stage's weights where
/// shapes match. resume, when given, continues mid-schedule from a saved
/// train state (weights are taken from `net` as passed in).
///
/// Scenes are fetched through `loader`; stage inputs are cached across epochs
/// when the scene count is small enough to afford it.
template <class T>
TrainState<T> train_coarse_to_fine(PyramidNetwork<T>& net, const SampleLoader<T>& loader,
                                   int sample_count, const TrainSchedule& schedule,
                                   const EpochCallback<T>& on_epoch = nullptr,
                                   const TrainState<T>* resume = nullptr) {
  OFU_REQUIRE(sample_count > 0, "train: dataset is empty");
  OFU_REQUIRE(schedule.epochs_per_stage.size() == net.stages.size(),
              "train: schedule must give one epoch count per stage");
  OFU_REQUIRE(schedule.grad_accum >= 1, "train: grad_accum must be >= 1");
  constexpr int kCacheLimit = 32;

  TrainState<T> state;
  if (resume) {
    state = *resume;
  }

  for (int stage = state.stage; stage < static_cast<int>(net.stages.size()); ++stage) {
    StageNetwork<T>& sn = net.stages[stage];
    const bool resuming_here = resume && stage == resume->stage;
    if (!resuming_here) {
      Rng init_rng(mix_seed(schedule.seed, 0x1217 + stage));
      if (stage == 0)
        sn.init_he(init_rng);
      else
        sn.init_from(net.stages[stage - 1], init_rng);
      state.adam = AdamState<T>::zeros_like(sn.parameters());
      state.next_epoch = 0;
    }
    state.stage = stage;

    AdamConfig adam_cfg;
    adam_cfg.lr = schedule.lr;
    std::vector<ConvParams<T>*> params = sn.parameters();

    // Per-scene stage inputs are constant within a stage (earlier stages are
    // frozen), so cache them when the dataset is small.
    const bool cache = sample_count <= kCacheLimit;
    std::vector<GridOctree<T>> cached_inputs;
    std::vector<DenseVolume<T>> cached_gt;
    if (cache) {
      cached_inputs.resize(sample_count);
      cached_gt.resize(sample_count);
      for (int i = 0; i < sample_count; ++i) {
        TrainSample<T> sample = loader(i);
        cached_inputs[i] = train_detail::build_stage_input(net, sample.levels, stage);
        cached_gt[i] = std::move(sample.gt[stage]);
      }
    }

    for (int epoch = state.next_epoch; epoch < schedule.epochs_per_stage[stage]; ++epoch) {
      const std::vector<int> order =
          train_detail::epoch_order<T>(schedule.seed, stage, epoch, sample_count);
      std::vector<ConvGrads<T>> accum;
      for (ConvParams<T>* p : params) accum.push_back(ConvGrads<T>::zeros_like(*p));
      int accum_count = 0;
      double epoch_loss = 0.0;

      for (int step = 0; step < sample_count; ++step) {
        const int idx = order[step];
        GridOctree<T> input;
        DenseVolume<T> gt;
        if (cache) {
          input = cached_inputs[idx];
          gt = cached_gt[idx];
        } else {
          TrainSample<T> sample = loader(idx);
          input = train_detail::build_stage_input(net, sample.levels, stage);
          gt = std::move(sample.gt[stage]);
        }

        StageRun<T> run = run_stage(sn, std::move(input), net.tau_per_level[stage]);
        const GridOctree<T>& recon = run.tape.value(run.recon_node);
        LossResult<T> loss = net.output_kind == FieldKind::TSDF ? level_l1_loss(recon, gt)
                                                                : level_bce_loss(recon, gt);
        if (!std::isfinite(loss.value))
          throw NumericError("train: non-finite loss at stage " + std::to_string(stage));
        epoch_loss += loss.value;

        std::vector<ConvGrads<T>> grads = backward(run.tape, run.recon_node, loss.grad);
        for (std::size_t p = 0; p < params.size(); ++p) {
          // Tape parameter order matches the declaration order within a stage.
          accum[p].add(grads[p]);
        }
        ++accum_count;

        if (accum_count == schedule.grad_accum || step + 1 == sample_count) {
          for (auto& g : accum) g.scale(T(1.0 / accum_count));
          adam_step(params, accum, state.adam, adam_cfg);
          for (std::size_t p = 0; p < params.size(); ++p) {
            std::fill(accum[p].weights.begin(), accum[p].weights.end(), T(0));
            std::fill(accum[p].bias.begin(), accum[p].bias.end(), T(0));
          }
          accum_count = 0;
        }
      }

      state.next_epoch = epoch + 1;
      if (on_epoch && !on_epoch(stage, epoch, epoch_loss / sample_count, state)) return state;
    }
    state.next_epoch = 0;
    if (stage + 1 < static_cast<int>(net.stages.size())) state.stage = stage + 1;
  }
  state.stage = static_cast<int>(net.stages.size());
  return state;
}

}  // namespace ofu
