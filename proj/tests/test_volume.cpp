#include "test_support.hpp"

#include "ofu/volume.hpp"

using namespace ofu;

TEST_CASE("VolumeDesc invariants") {
  CHECK_THROWS_AS(VolumeDesc(Vec3d::Zero(), 0.0, Vec3i(4, 4, 4)), ContractError);
  CHECK_THROWS_AS(VolumeDesc(Vec3d::Zero(), 0.1, Vec3i(0, 4, 4)), ContractError);

  const VolumeDesc d(Vec3d(1.0, 2.0, 3.0), 0.5, Vec3i(4, 6, 8));
  CHECK(d.voxel_count() == 4 * 6 * 8);
  CHECK(d.voxel_center(0, 0, 0) == Vec3d(1.25, 2.25, 3.25));
  CHECK(d.voxel_center(3, 5, 7) == Vec3d(1.0 + 3.5 * 0.5, 2.0 + 5.5 * 0.5, 3.0 + 7.5 * 0.5));
  CHECK(d.in_range(3, 5, 7));
  CHECK_FALSE(d.in_range(4, 0, 0));
  CHECK_FALSE(d.in_range(0, -1, 0));
}

TEST_CASE("VolumeDesc coarser/finer round trip") {
  const VolumeDesc d = VolumeDesc::cube(Vec3d(-1.5, -1.5, -1.5), 3.0, 64);
  const VolumeDesc c = d.coarser();
  CHECK(c.resolution == Vec3i(32, 32, 32));
  CHECK(c.voxel_size == doctest::Approx(2.0 * d.voxel_size));
  CHECK(c.finer() == d);
}

TEST_CASE("DenseVolume layout is (channel, x, y, z) with z fastest") {
  const VolumeDesc d(Vec3d::Zero(), 1.0, Vec3i(2, 3, 4));
  DenseVolume<float> vol(d, 2);
  CHECK(vol.data.size() == 2u * 2 * 3 * 4);

  vol.at(1, 1, 2, 3) = 7.0f;
  const std::size_t expect = 1u * 24 + (1u * 3 + 2) * 4 + 3;
  CHECK(vol.data[expect] == 7.0f);

  vol.channel(0).setConstant(2.0f);
  CHECK(vol.at(0, 1, 1, 1) == 2.0f);
  CHECK(vol.at(1, 1, 2, 3) == 7.0f);
}
