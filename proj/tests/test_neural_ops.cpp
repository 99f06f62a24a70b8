#include "test_support.hpp"

#include "ofu/nn/layers.hpp"
#include "ofu/nn/network.hpp"

using namespace ofu;
using namespace ofu::testing;

namespace {
const VolumeDesc kDesc16(Vec3d(-1, -1, -1), 0.125, Vec3i(16, 16, 16));
const VolumeDesc kDesc24(Vec3d(-1.5, -1.5, -1.5), 0.125, Vec3i(24, 24, 24));

template <class T>
ConvParams<T> random_conv(Rng& rng, int in, int out) {
  ConvParams<T> p(in, out, 3);
  for (auto& w : p.weights) w = static_cast<T>(rng.uniform(-0.3, 0.3));
  for (auto& b : p.bias) b = static_cast<T>(rng.uniform(-0.1, 0.1));
  return p;
}

}  // namespace

TEST_CASE("conv with an identity kernel reproduces a fully split input exactly") {
  Rng rng(1);
  const DenseVolume<float> vol = random_volume<float>(rng, kDesc16, 2);
  const GridOctree<float> oct = from_dense(vol, [](int, int, int) { return true; });
  ConvParams<float> p(2, 2, 3);
  p.weights[(0 * 2 + 0) * 27 + 13] = 1.0f;  // center tap, channel 0 -> 0
  p.weights[(1 * 2 + 1) * 27 + 13] = 1.0f;  // center tap, channel 1 -> 1
  const GridOctree<float> out = oct_conv3(oct, p);
  CHECK(out.same_structure(oct));
  CHECK(out.features == oct.features);
}

TEST_CASE("all-ones kernel on a constant merged field gives 27c away from boundaries") {
  GridOctree<float> oct(kDesc24, 1);  // 3^3 trees, all merged
  std::fill(oct.features.begin(), oct.features.end(), 0.5f);
  ConvParams<float> p(1, 1, 3);
  std::fill(p.weights.begin(), p.weights.end(), 1.0f);
  const GridOctree<float> out = oct_conv3(oct, p);
  // The center tree is interior: every voxel it covers responds 27 * 0.5.
  const std::int64_t center_leaf = out.leaf_of_voxel(12, 12, 12);
  CHECK(out.leaf_data(center_leaf)[0] == doctest::Approx(13.5).epsilon(1e-6));
}

TEST_CASE("conv channel mismatch is an error") {
  GridOctree<float> oct(kDesc16, 2);
  ConvParams<float> p(3, 4, 3);
  CHECK_THROWS_AS(oct_conv3(oct, p), ContractError);
}

TEST_CASE("oct_conv3 equals the dense-conv-then-cell-mean oracle on random octrees") {
  Rng rng(7);
  for (int trial = 0; trial < 8; ++trial) {
    const int in = rng.uniform_int(1, 3);
    const int out_ch = rng.uniform_int(1, 4);
    const GridOctree<float> x = random_octree<float>(rng, kDesc16, in);
    const ConvParams<float> p = random_conv<float>(rng, in, out_ch);

    const GridOctree<float> y = oct_conv3(x, p);
    CHECK(y.same_structure(x));

    const DenseVolume<float> x_dense = to_dense(x);
    const DenseVolume<double> conv = naive_conv3(x_dense, p);
    const DenseVolume<double> want = naive_cell_mean(conv, x);
    CHECK(max_rel_err(to_dense(y), want) < 1e-5);
  }
}

TEST_CASE("dense_conv3 matches the naive reference") {
  Rng rng(19);
  const DenseVolume<float> x = random_volume<float>(rng, kDesc16, 2);
  const ConvParams<float> p = random_conv<float>(rng, 2, 3);
  const DenseVolume<float> got = dense_conv3(x, p);
  const DenseVolume<double> want = naive_conv3(x, p);
  CHECK(max_rel_err(got, want) < 1e-5);
}

TEST_CASE("pool: constants are preserved and spikes survive") {
  GridOctree<float> constant(kDesc16, 1);
  std::fill(constant.features.begin(), constant.features.end(), 0.75f);
  const GridOctree<float> pooled = oct_pool(constant);
  CHECK(pooled.desc.resolution == Vec3i(8, 8, 8));
  for (float v : pooled.features) CHECK(v == 0.75f);

  // A single positive spike in a zero field survives max pooling.
  DenseVolume<float> vol(kDesc16, 1);
  vol.at(0, 9, 6, 3) = 2.0f;
  const GridOctree<float> oct =
      from_dense(vol, [&](int i, int j, int k) { return vol.at(0, i, j, k) != 0.0f; });
  const GridOctree<float> spiky = oct_pool(oct);
  CHECK(to_dense(spiky).at(0, 4, 3, 1) == 2.0f);
}

TEST_CASE("oct_pool equals the dense max-pool oracle exactly") {
  Rng rng(23);
  for (int trial = 0; trial < 8; ++trial) {
    const GridOctree<float> x = random_octree<float>(rng, kDesc16, 2);
    const GridOctree<float> y = oct_pool(x);
    validate(y);
    const DenseVolume<float> want = naive_maxpool(to_dense(x));
    CHECK(to_dense(y).data == want.data);
  }
}

TEST_CASE("unpool: constants, leaf accounting and the dense NN-upsample oracle") {
  GridOctree<float> constant(kDesc16, 1);
  std::fill(constant.features.begin(), constant.features.end(), -0.25f);
  const GridOctree<float> up = oct_unpool(constant);
  CHECK(up.desc.resolution == Vec3i(32, 32, 32));
  for (float v : up.features) CHECK(v == -0.25f);

  Rng rng(29);
  for (int trial = 0; trial < 8; ++trial) {
    GridOctree<float> x = random_octree<float>(rng, kDesc16, 2);
    // Force roots split so every leaf's image is a single output cell.
    for (auto& bits : x.trees) bits.set_root();
    x.rebuild_offsets();
    x.features.resize(static_cast<std::size_t>(x.total_leaves()) * 2);
    for (auto& v : x.features) v = static_cast<float>(rng.uniform(-1, 1));

    const GridOctree<float> y = oct_unpool(x);
    validate(y);
    CHECK(y.total_leaves() == x.total_leaves());  // leaf count preserved
    // Per-cell voxel count is multiplied by 8 (checked through one example
    // leaf of every depth via the partition property below).
    const DenseVolume<float> want = naive_nn_upsample(to_dense(x));
    CHECK(to_dense(y).data == want.data);

    std::int64_t covered = 0;
    for_each_cell(y, [&](const CellRef& cell) {
      covered += static_cast<std::int64_t>(cell.edge) * cell.edge * cell.edge;
    });
    CHECK(covered == y.desc.voxel_count());
  }
}

TEST_CASE("unpool of fully merged trees fans out to eight merged trees") {
  GridOctree<float> x(kDesc16, 1);  // 2^3 merged trees
  std::iota(x.features.begin(), x.features.end(), 0.0f);
  const GridOctree<float> y = oct_unpool(x);
  CHECK(y.total_leaves() == 8 * x.total_leaves());  // shallow-tree cap: 8 copies
  CHECK(to_dense(y).data == naive_nn_upsample(to_dense(x)).data);
}

TEST_CASE("unpool_to evaluates onto the paired finer structure exactly") {
  Rng rng(31);
  for (int trial = 0; trial < 8; ++trial) {
    const GridOctree<float> fine_structure = random_octree<float>(rng, kDesc16, 1);
    GridOctree<float> coarse = coarsened_structure(fine_structure, 2);
    for (auto& v : coarse.features) v = static_cast<float>(rng.uniform(-1, 1));

    const GridOctree<float> up = oct_unpool_to(coarse, fine_structure);
    CHECK(up.same_structure(fine_structure));
    const DenseVolume<float> want = naive_nn_upsample(to_dense(coarse));
    CHECK(to_dense(up).data == want.data);
  }
}

TEST_CASE("concat stacks channels; dense equivalence and structure checks") {
  Rng rng(37);
  const GridOctree<float> a = random_octree<float>(rng, kDesc16, 2);
  GridOctree<float> b = a;
  b.channels = 3;
  b.features.assign(static_cast<std::size_t>(b.total_leaves()) * 3, 0.0f);
  for (auto& v : b.features) v = static_cast<float>(rng.uniform(-1, 1));

  const GridOctree<float> cat = oct_concat(a, b);
  CHECK(cat.channels == 5);
  const DenseVolume<float> da = to_dense(a), db = to_dense(b), dc = to_dense(cat);
  for (std::int64_t v = 0; v < da.voxel_count(); ++v) {
    for (int c = 0; c < 2; ++c) CHECK(dc.at(c, v) == da.at(c, v));
    for (int c = 0; c < 3; ++c) CHECK(dc.at(2 + c, v) == db.at(c, v));
  }

  const GridOctree<float> other = random_octree<float>(rng, kDesc16, 1);
  if (!other.same_structure(a)) CHECK_THROWS_AS(oct_concat(a, other), ContractError);
}

TEST_CASE("relu clamps negatives and keeps structure") {
  Rng rng(41);
  const GridOctree<float> x = random_octree<float>(rng, kDesc16, 3);
  const GridOctree<float> y = oct_relu(x);
  CHECK(y.same_structure(x));
  for (std::size_t i = 0; i < x.features.size(); ++i)
    CHECK(y.features[i] == std::max(x.features[i], 0.0f));
}

// ---------------------------------------------------------------------------
// Structure module
// ---------------------------------------------------------------------------

TEST_CASE("tsdf split mask: all free space yields an empty mask and merged next level") {
  const float tau = 0.4f;
  GridOctree<float> recon(kDesc16, 1);
  std::fill(recon.features.begin(), recon.features.end(), tau);  // R = +tau everywhere
  const SplitMask mask = tsdf_split_mask(recon, tau);
  for (auto m : mask) CHECK(m == 0);

  const GridOctree<float> up = oct_unpool(recon);
  const GridOctree<float> next = split_cells(up, transfer_mask_through_unpool(recon, up, mask));
  for (const TreeBits& bits : next.trees) CHECK(bits.leaf_count() == 1);
}

TEST_CASE("tsdf split mask marks exactly the slab around a planar zero crossing") {
  const float tau = 0.25f;
  // R = linear ramp in z crossing zero mid-volume.
  DenseVolume<float> ramp(kDesc16, 1);
  for (int i = 0; i < 16; ++i)
    for (int j = 0; j < 16; ++j)
      for (int k = 0; k < 16; ++k)
        ramp.at(0, i, j, k) = static_cast<float>(0.125 * (k - 7.3));
  const GridOctree<float> recon = from_dense(ramp, [](int, int, int) { return true; });
  const SplitMask mask = tsdf_split_mask(recon, tau);
  for_each_cell(recon, [&](const CellRef& cell) {
    const bool want = std::abs(recon.leaf_data(cell.leaf)[0]) < tau;
    CHECK(static_cast<bool>(mask[cell.leaf]) == want);
  });
}

TEST_CASE("tsdf split mask equals the per-cell threshold oracle on random fields") {
  Rng rng(43);
  const GridOctree<float> recon = random_octree<float>(rng, kDesc16, 1);
  const float tau = 0.5f;
  const SplitMask mask = tsdf_split_mask(recon, tau);
  std::int64_t idx = 0;
  for (float v : recon.features) {
    CHECK(static_cast<bool>(mask[idx]) == (std::abs(v) < tau));
    ++idx;
  }
}

TEST_CASE("occupancy split mask flags dilated high-gradient cells") {
  // Occupancy step along z: gradient magnitude 1 at the jump.
  DenseVolume<float> occ(kDesc16, 1);
  for (int i = 0; i < 16; ++i)
    for (int j = 0; j < 16; ++j)
      for (int k = 8; k < 16; ++k) occ.at(0, i, j, k) = 1.0f;
  const GridOctree<float> recon = from_dense(occ, [](int, int, int) { return true; });
  const SplitMask mask = occupancy_split_mask(recon, 2, 0.1);
  for_each_cell(recon, [&](const CellRef& cell) {
    const int k = cell.origin.z();
    const bool want = k >= 5 && k <= 9;  // jump edge at k=7 dilated by 2
    CHECK(static_cast<bool>(mask[cell.leaf]) == want);
  });
}

TEST_CASE("channel arithmetic invariants are enforced at construction") {
  auto stage = StageNetwork<float>::make(0, 1, FieldKind::TSDF, 16);
  CHECK(stage.conv2.out_channels == 32);
  CHECK(stage.conv3.out_channels == 64);
  CHECK(stage.conv4.in_channels == 96);
  CHECK(stage.conv5.in_channels == 48);
  stage.conv2 = ConvParams<float>(16, 24, 3);  // breaks the doubling rule
  CHECK_THROWS_AS(stage.check_channel_arithmetic(), ContractError);
}
