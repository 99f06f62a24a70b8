#include "test_support.hpp"

#include "ofu/nn/checkpoint.hpp"
#include "ofu/nn/loss.hpp"
#include "ofu/nn/network.hpp"

#include <filesystem>

using namespace ofu;
using namespace ofu::testing;

namespace {
const VolumeDesc kDesc32(Vec3d(-1.5, -1.5, -1.5), 3.0 / 32, Vec3i(32, 32, 32));
const VolumeDesc kDesc8(Vec3d::Zero(), 0.25, Vec3i(8, 8, 8));
}  // namespace

TEST_CASE("zero-weight stage outputs constant fields set by the head bias") {
  StageNetwork<float> stage = StageNetwork<float>::make(0, 1, FieldKind::TSDF, 4);
  stage.head.bias[0] = 0.5f;
  const float tau = 0.375f;
  Rng rng(1);
  GridOctree<float> input = random_octree<float>(rng, kDesc32, 1);
  StageRun<float> run = run_stage(stage, std::move(input), tau);
  // Head output is scaled by tau before clamping: constant tau * bias.
  for (float v : run.tape.value(run.recon_node).features)
    CHECK(v == doctest::Approx(tau * 0.5f));
}

TEST_CASE("single-stage pyramid equals the stage applied directly") {
  PyramidNetwork<float> net =
      PyramidNetwork<float>::make(1, kDesc32, EncodingKind::TSDF1D, FieldKind::TSDF, 4);
  Rng init(3);
  net.stages[0].init_he(init);

  // Synthetic level input.
  Rng rng(5);
  LevelInput<float> li;
  li.desc = kDesc32;
  li.tau = net.tau_per_level[0];
  li.encoding = random_volume<float>(rng, kDesc32, 1, -li.tau, li.tau);
  li.observed = DenseVolume<std::uint8_t>(kDesc32, 1, 1);

  PyramidRun<float> run = pyramid_forward(net, {li});
  REQUIRE(run.recons.size() == 1);

  GridOctree<float> direct_in = build_stage0_input(li, EncodingKind::TSDF1D);
  StageRun<float> direct = run_stage(net.stages[0], std::move(direct_in), li.tau);
  CHECK(run.recons[0].octree().features == direct.tape.value(direct.recon_node).features);
}

TEST_CASE("two-stage pyramid: structures refine and descriptors line up") {
  PyramidNetwork<float> net =
      PyramidNetwork<float>::make(2, kDesc32, EncodingKind::TSDF1D, FieldKind::TSDF, 4);
  Rng init(7);
  net.stages[0].init_he(init);
  net.stages[1].init_from(net.stages[0], init);

  Rng rng(11);
  std::vector<LevelInput<float>> levels;
  VolumeDesc desc = kDesc32;
  for (int l = 0; l < 2; ++l) {
    LevelInput<float> li;
    li.desc = desc;
    li.tau = net.tau_per_level[l];
    li.encoding = random_volume<float>(rng, desc, 1, -li.tau, li.tau);
    li.observed = DenseVolume<std::uint8_t>(desc, 1, 1);
    levels.push_back(std::move(li));
    desc = desc.finer();
  }

  PyramidRun<float> run = pyramid_forward(net, levels);
  REQUIRE(run.recons.size() == 2);
  CHECK(run.recons[0].desc.resolution == Vec3i(32, 32, 32));
  CHECK(run.recons[1].desc.resolution == Vec3i(64, 64, 64));
  CHECK(run.stage_inputs[1].channels == 4 + 1 + 1);  // features + recon + encoding
  validate(run.recons[1].octree());
}

TEST_CASE("per-level l1 loss: zero at equality, |c| for constant offsets") {
  Rng rng(13);
  DenseVolume<float> gt = random_volume<float>(rng, kDesc8, 1);
  const GridOctree<float> pred = from_dense(gt, [](int, int, int) { return true; });
  CHECK(level_l1_loss(pred, gt).value == doctest::Approx(0.0));

  GridOctree<float> shifted = pred;
  for (auto& v : shifted.features) v += 0.125f;
  CHECK(level_l1_loss(shifted, gt).value == doctest::Approx(0.125).epsilon(1e-6));

  // Sum over levels.
  const std::vector<FusionField<float>> recons = {
      FusionField<float>(FieldKind::TSDF, 1.0f, shifted),
      FusionField<float>(FieldKind::TSDF, 1.0f, shifted)};
  const std::vector<DenseVolume<float>> gts = {gt, gt};
  CHECK(pyramid_loss(recons, gts, FieldKind::TSDF) == doctest::Approx(0.25).epsilon(1e-6));
}

TEST_CASE("losses match dense-side oracles on random structures") {
  Rng rng(17);
  const GridOctree<float> pred = random_octree<float>(rng, kDesc8, 1, 0.05, 0.95);
  DenseVolume<float> gt(kDesc8, 1);
  for (auto& v : gt.data) v = static_cast<float>(rng.uniform(0, 1) < 0.5 ? 0.0 : 1.0);

  const DenseVolume<float> pred_dense = to_dense(pred);
  long double l1 = 0.0L, bce = 0.0L;
  for (std::int64_t v = 0; v < gt.voxel_count(); ++v) {
    const double p = pred_dense.at(0, v), g = gt.at(0, v);
    l1 += std::abs(p - g);
    bce -= g * std::log(p) + (1.0 - g) * std::log(1.0 - p);
  }
  const double n = static_cast<double>(gt.voxel_count());
  CHECK(level_l1_loss(pred, gt).value == doctest::Approx(double(l1) / n).epsilon(1e-9));
  CHECK(level_bce_loss(pred, gt).value == doctest::Approx(double(bce) / n).epsilon(1e-9));
}

TEST_CASE("adam: zero gradients leave parameters unchanged") {
  ConvParams<float> p(1, 1, 3);
  std::iota(p.weights.begin(), p.weights.end(), 1.0f);
  const std::vector<float> before = p.weights;
  std::vector<ConvParams<float>*> params{&p};
  AdamState<float> state = AdamState<float>::zeros_like(params);
  std::vector<ConvGrads<float>> grads{ConvGrads<float>::zeros_like(p)};
  adam_step(params, grads, state);
  CHECK(p.weights == before);
}

TEST_CASE("adam: first-step magnitude is about lr in the gradient's direction") {
  ConvParams<float> p(1, 1, 1);
  p.weights[0] = 0.3f;
  std::vector<ConvParams<float>*> params{&p};
  AdamState<float> state = AdamState<float>::zeros_like(params);
  std::vector<ConvGrads<float>> grads{ConvGrads<float>::zeros_like(p)};
  grads[0].weights[0] = 2.5f;
  AdamConfig cfg;
  cfg.lr = 1e-4;
  adam_step(params, grads, state, cfg);
  CHECK(p.weights[0] == doctest::Approx(0.3f - 1e-4).epsilon(1e-5));
}

TEST_CASE("adam: 200 steps on a quadratic bowl cut the loss by more than 90%") {
  ConvParams<double> p(1, 4, 1);
  Rng rng(23);
  for (auto& w : p.weights) w = rng.uniform(-1, 1);
  const std::vector<double> target = {0.3, -0.7, 0.1, 0.9};
  std::vector<ConvParams<double>*> params{&p};
  AdamState<double> state = AdamState<double>::zeros_like(params);
  AdamConfig cfg;
  cfg.lr = 0.02;

  auto loss = [&] {
    double acc = 0.0;
    for (int i = 0; i < 4; ++i) acc += (p.weights[i] - target[i]) * (p.weights[i] - target[i]);
    return acc;
  };
  const double initial = loss();
  for (int step = 0; step < 200; ++step) {
    std::vector<ConvGrads<double>> grads{ConvGrads<double>::zeros_like(p)};
    for (int i = 0; i < 4; ++i) grads[0].weights[i] = 2.0 * (p.weights[i] - target[i]);
    adam_step(params, grads, state, cfg);
  }
  CHECK(loss() < 0.1 * initial);
}

TEST_CASE("checkpoint round trip preserves weights bitwise") {
  PyramidNetwork<float> net =
      PyramidNetwork<float>::make(2, kDesc32, EncodingKind::Histogram10D, FieldKind::TSDF, 8);
  Rng init(29);
  for (auto& s : net.stages) s.init_he(init);

  const auto path = std::filesystem::temp_directory_path() / "ofu_test_ckpt.ofn";
  write_checkpoint(path, net);
  PyramidNetwork<float> loaded = read_checkpoint<float>(path);
  REQUIRE(loaded.stages.size() == 2);
  CHECK(loaded.output_kind == FieldKind::TSDF);
  CHECK(loaded.width == 8);
  CHECK(loaded.stages[1].input_channels == net.stages[1].input_channels);
  for (std::size_t s = 0; s < 2; ++s) {
    auto a = net.stages[s].parameters();
    auto b = loaded.stages[s].parameters();
    for (std::size_t t = 0; t < a.size(); ++t) {
      CHECK(a[t]->weights == b[t]->weights);
      CHECK(a[t]->bias == b[t]->bias);
    }
  }
  std::filesystem::remove(path);
}

TEST_CASE("checkpoint loader rejects junk") {
  const auto path = std::filesystem::temp_directory_path() / "ofu_bad_ckpt.ofn";
  std::ofstream(path) << "not a checkpoint";
  CHECK_THROWS_AS(read_checkpoint<float>(path), DataError);
  std::filesystem::remove(path);
}

TEST_CASE("train state round trip") {
  TrainState<float> st;
  st.stage = 1;
  st.next_epoch = 7;
  st.adam.step = 42;
  st.adam.m = {{1.0, 2.0}, {3.0}};
  st.adam.v = {{4.0, 5.0}, {6.0}};
  const auto path = std::filesystem::temp_directory_path() / "ofu_test_state.ofs";
  write_train_state(path, st);
  const TrainState<float> loaded = read_train_state<float>(path);
  CHECK(loaded.stage == 1);
  CHECK(loaded.next_epoch == 7);
  CHECK(loaded.adam.step == 42);
  CHECK(loaded.adam.m == st.adam.m);
  CHECK(loaded.adam.v == st.adam.v);
  std::filesystem::remove(path);
}

TEST_CASE("warm start copies matching tensors and re-draws the rest") {
  StageNetwork<float> prev = StageNetwork<float>::make(0, 1, FieldKind::TSDF, 8);
  Rng init(31);
  prev.init_he(init);
  StageNetwork<float> next = StageNetwork<float>::make(1, 8 + 1 + 1, FieldKind::TSDF, 8);
  next.init_from(prev, init);
  CHECK(next.conv2.weights == prev.conv2.weights);
  CHECK(next.conv5.weights == prev.conv5.weights);
  CHECK(next.head.weights == prev.head.weights);
  CHECK(next.conv1.weights.size() != prev.conv1.weights.size());
}
