#include "test_support.hpp"

#include "ofu/octree_io.hpp"

#include <filesystem>

using namespace ofu;
using namespace ofu::testing;

namespace {
const VolumeDesc kDesc16(Vec3d(-1, -1, -1), 0.125, Vec3i(16, 16, 16));
const VolumeDesc kDesc8(Vec3d(0, 0, 0), 0.25, Vec3i(8, 8, 8));
}  // namespace

TEST_CASE("all-merged build: one leaf per tree") {
  const DenseVolume<float> zeros(kDesc16, 2);
  const GridOctree<float> oct = from_dense(zeros, [&](int i, int j, int k) {
    return zeros.at(0, i, j, k) != 0.0f;
  });
  validate(oct);
  CHECK(oct.total_leaves() == 8);  // 2x2x2 trees, one leaf each
  for (const TreeBits& bits : oct.trees) CHECK(bits.leaf_count() == 1);
  for (float v : oct.features) CHECK(v == 0.0f);
}

TEST_CASE("single nonzero voxel splits one path to the finest level") {
  DenseVolume<float> vol(kDesc8, 1);
  vol.at(0, 3, 5, 6) = 1.0f;
  const GridOctree<float> oct =
      from_dense(vol, [&](int i, int j, int k) { return vol.at(0, i, j, k) != 0.0f; });
  validate(oct);
  const TreeBits& bits = oct.trees[0];
  const int set_bits = int(bits.root) + std::popcount(unsigned(bits.l1)) + std::popcount(bits.l2);
  CHECK(set_bits == 3);  // root + one level-1 + one level-2 split
  CHECK(bits.leaf_count() == 1 + 7 * 3);
  CHECK(oct.value_at(0, 3, 5, 6) == 1.0f);

  // |Omega| = 1 at the nonzero voxel: its leaf covers exactly itself.
  bool found = false;
  for_each_cell(oct, [&](const CellRef& cell) {
    if (cell.origin == Vec3i(3, 5, 6)) {
      CHECK(cell.edge == 1);
      found = true;
    }
  });
  CHECK(found);
}

TEST_CASE("from_dense rejects resolutions not divisible by 8") {
  const DenseVolume<float> vol(VolumeDesc(Vec3d::Zero(), 1.0, Vec3i(12, 8, 8)), 1);
  CHECK_THROWS_AS(from_dense(vol, [](int, int, int) { return true; }), ContractError);
}

TEST_CASE("to_dense(from_dense) equals the brute-force cell-mean oracle") {
  Rng rng(1234);
  for (int trial = 0; trial < 10; ++trial) {
    const DenseVolume<float> vol = random_volume<float>(rng, kDesc16, 2);
    const double keep = rng.uniform(0.0, 0.3);
    const GridOctree<float> oct = from_dense(vol, [&](int i, int j, int k) {
      return Rng(mix_seed(trial * 10000 + i * 289 + j * 17 + k, 5)).uniform() < keep;
    });
    validate(oct);
    const DenseVolume<double> want = naive_cell_mean(vol, oct);
    const DenseVolume<float> got = to_dense(oct);
    CHECK(max_rel_err(got, want) < 1e-6);
  }
}

TEST_CASE("fully split build round-trips bit exactly") {
  Rng rng(77);
  const DenseVolume<float> vol = random_volume<float>(rng, kDesc16, 3);
  const GridOctree<float> oct = from_dense(vol, [](int, int, int) { return true; });
  CHECK(oct.total_leaves() == vol.voxel_count());
  const DenseVolume<float> back = to_dense(oct);
  CHECK(back.data == vol.data);
}

TEST_CASE("single-leaf tree expands to a constant block") {
  GridOctree<float> oct(kDesc8, 1);
  oct.features[0] = 3.5f;
  const DenseVolume<float> dense = to_dense(oct);
  for (float v : dense.data) CHECK(v == 3.5f);
}

TEST_CASE("to_dense matches a per-voxel Omega-lookup oracle on random structures") {
  Rng rng(4321);
  for (int trial = 0; trial < 10; ++trial) {
    const GridOctree<float> oct = random_octree<float>(rng, kDesc16, 2);
    validate(oct);
    const DenseVolume<float> dense = to_dense(oct);
    for (int i = 0; i < 16; ++i)
      for (int j = 0; j < 16; ++j)
        for (int k = 0; k < 16; ++k)
          for (int c = 0; c < 2; ++c)
            CHECK(dense.at(c, i, j, k) == oct.leaf_data(oct.leaf_of_voxel(i, j, k))[c]);
  }
}

TEST_CASE("voxels sharing a leaf read the identical feature vector") {
  Rng rng(99);
  const GridOctree<float> oct = random_octree<float>(rng, kDesc8, 1);
  for_each_cell(oct, [&](const CellRef& cell) {
    const float want = oct.leaf_data(cell.leaf)[0];
    for (int dx = 0; dx < cell.edge; ++dx)
      CHECK(oct.value_at(0, cell.origin.x() + dx, cell.origin.y(), cell.origin.z()) == want);
  });
}

TEST_CASE("cell_iter: single-leaf grid yields one 8^3 span; full split yields 512") {
  GridOctree<float> merged(kDesc8, 1);
  int count = 0;
  for_each_cell(merged, [&](const CellRef& cell) {
    CHECK(cell.edge == 8);
    CHECK(cell.origin == Vec3i(0, 0, 0));
    ++count;
  });
  CHECK(count == 1);

  const DenseVolume<float> vol(kDesc8, 1);
  const GridOctree<float> split = from_dense(vol, [](int, int, int) { return true; });
  count = 0;
  for_each_cell(split, [&](const CellRef& cell) {
    CHECK(cell.edge == 1);
    ++count;
  });
  CHECK(count == 512);
}

TEST_CASE("cell spans partition the volume exactly") {
  Rng rng(31337);
  for (int trial = 0; trial < 5; ++trial) {
    const GridOctree<float> oct = random_octree<float>(rng, kDesc16, 1);
    std::vector<int> covered(oct.desc.voxel_count(), 0);
    std::int64_t visits = 0;
    for_each_cell(oct, [&](const CellRef& cell) {
      ++visits;
      for (int dx = 0; dx < cell.edge; ++dx)
        for (int dy = 0; dy < cell.edge; ++dy)
          for (int dz = 0; dz < cell.edge; ++dz)
            covered[oct.desc.linear_index(cell.origin.x() + dx, cell.origin.y() + dy,
                                          cell.origin.z() + dz)] += 1;
    });
    CHECK(visits == oct.total_leaves());
    for (int c : covered) CHECK(c == 1);
  }
}

TEST_CASE("split_cells: all-false mask is the identity") {
  Rng rng(8);
  const GridOctree<float> oct = random_octree<float>(rng, kDesc16, 2);
  const GridOctree<float> out = split_cells(oct, SplitMask(oct.total_leaves(), 0));
  CHECK(out.same_structure(oct));
  CHECK(out.features == oct.features);
}

TEST_CASE("split_cells: splitting a single-leaf tree copies the value to 8 children") {
  GridOctree<float> oct(kDesc8, 1);
  oct.features[0] = 2.25f;
  const GridOctree<float> out = split_cells(oct, SplitMask{1});
  validate(out);
  CHECK(out.total_leaves() == 8);
  for (float v : out.features) CHECK(v == 2.25f);
  for_each_cell(out, [&](const CellRef& cell) { CHECK(cell.edge == 4); });
}

TEST_CASE("split_cells never changes represented values") {
  Rng rng(15);
  for (int trial = 0; trial < 10; ++trial) {
    const GridOctree<float> oct = random_octree<float>(rng, kDesc16, 2);
    SplitMask mask(oct.total_leaves());
    for (auto& m : mask) m = rng.uniform() < 0.5;
    const GridOctree<float> out = split_cells(oct, mask);
    validate(out);
    CHECK(to_dense(out).data == to_dense(oct).data);
  }
}

TEST_CASE("split_cells on finest-level leaves is a no-op") {
  const DenseVolume<float> vol(kDesc8, 1);
  const GridOctree<float> oct = from_dense(vol, [](int, int, int) { return true; });
  const GridOctree<float> out = split_cells(oct, SplitMask(oct.total_leaves(), 1));
  CHECK(out.same_structure(oct));
}

TEST_CASE("split_cells rejects misaligned masks") {
  GridOctree<float> oct(kDesc8, 1);
  CHECK_THROWS_AS(split_cells(oct, SplitMask(7, 0)), ContractError);
}

TEST_CASE("validator catches parent-bit violations and stale offsets") {
  GridOctree<float> oct(kDesc8, 1);
  oct.trees[0].set_l1(3);  // level-1 split without a root split
  CHECK_THROWS_AS(validate(oct), ContractError);

  GridOctree<float> oct2(kDesc8, 1);
  oct2.trees[0].set_root();  // structure changed, offsets/features stale
  CHECK_THROWS_AS(validate(oct2), ContractError);
}

TEST_CASE("octree volume file round trip is bit exact") {
  Rng rng(2024);
  GridOctree<float> oct =
      random_octree<float>(rng, VolumeDesc(Vec3d(-1.5, -1.5, -1.5), 0.1875, Vec3i(16, 8, 24)), 3);
  const auto path = std::filesystem::temp_directory_path() / "ofu_test_oct.goc";
  write_grid_octree(path, oct);
  const GridOctree<float> loaded = read_grid_octree<float>(path);
  CHECK(loaded.same_structure(oct));
  CHECK(loaded.features == oct.features);
  CHECK(loaded.channels == 3);
  CHECK(loaded.desc.resolution == oct.desc.resolution);

  // Second write must produce identical bytes.
  const auto path2 = std::filesystem::temp_directory_path() / "ofu_test_oct2.goc";
  write_grid_octree(path2, loaded);
  std::ifstream a(path, std::ios::binary), b(path2, std::ios::binary);
  const std::string bytes_a((std::istreambuf_iterator<char>(a)), {});
  const std::string bytes_b((std::istreambuf_iterator<char>(b)), {});
  CHECK(bytes_a == bytes_b);
  std::filesystem::remove(path);
  std::filesystem::remove(path2);
}

TEST_CASE("structure coarsen/double round trip preserves pool-level detail") {
  Rng rng(3);
  const GridOctree<float> oct = random_octree<float>(rng, kDesc16, 1);
  const GridOctree<float> coarse = coarsened_structure(oct, 1);
  validate(coarse);
  CHECK(coarse.grid_dims == Vec3i(1, 1, 1));
  const GridOctree<float> fine = doubled_structure(coarse, 1);
  validate(fine);
  CHECK(fine.grid_dims == oct.grid_dims);
}
