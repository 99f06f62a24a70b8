#include "test_support.hpp"

#include "ofu/fusion.hpp"

using namespace ofu;
using namespace ofu::testing;

namespace {

// Wide-angle frontal camera that sees the whole test volume.
const CameraIntrinsics kWide(20.0, 20.0, 32.0, 24.0, 64, 48);

DepthView constant_view(float depth) {
  DepthView view(kWide, RigidPose{});
  view.depth.setConstant(depth);
  return view;
}

// Volume in front of the camera, z in [1, 3].
const VolumeDesc kDesc(Vec3d(-1.0, -1.0, 1.0), 0.25, Vec3i(8, 8, 8));

std::vector<DepthView> random_views(Rng& rng, int k) {
  std::vector<DepthView> views;
  for (int v = 0; v < k; ++v) {
    DepthView view(kWide, RigidPose{});
    for (int r = 0; r < kWide.height; ++r)
      for (int c = 0; c < kWide.width; ++c)
        view.depth(r, c) = rng.uniform() < 0.15
                               ? invalid_depth()
                               : static_cast<float>(rng.uniform(0.5, 4.0));
    views.push_back(std::move(view));
  }
  return views;
}

}  // namespace

TEST_CASE("encoders reject empty view lists") {
  CHECK_THROWS_AS(encode_occupancy<float>({}, kDesc), ContractError);
  CHECK_THROWS_AS(encode_tsdf<float>({}, kDesc, 1.0), ContractError);
  CHECK_THROWS_AS(encode_tdf_occ<float>({}, kDesc, 1.0), ContractError);
  CHECK_THROWS_AS(encode_histogram<float>({}, kDesc, 1.0), ContractError);
}

TEST_CASE("occupancy: free-space, occupied and out-of-frustum clauses") {
  const double s = kDesc.voxel_size;

  // Surface far behind every voxel: gap > s everywhere -> free.
  const DenseVolume<float> free = encode_occupancy<float>({constant_view(10.0f)}, kDesc);
  for (float v : free.data) CHECK(v == 0.0f);

  // Surface in front of every voxel: gap <= s, no free-space vote -> occupied.
  const DenseVolume<float> occ = encode_occupancy<float>({constant_view(0.5f)}, kDesc);
  for (float v : occ.data) CHECK(v == 1.0f);

  // One view votes free, another behind: the free view wins.
  const DenseVolume<float> mixed =
      encode_occupancy<float>({constant_view(10.0f), constant_view(0.5f)}, kDesc);
  for (float v : mixed.data) CHECK(v == 0.0f);

  // Volume behind the camera: no view observes it, vacuous existential -> 0.
  const VolumeDesc behind(Vec3d(-1.0, -1.0, -3.0), 0.25, Vec3i(8, 8, 8));
  const DenseVolume<float> unseen = encode_occupancy<float>({constant_view(2.0f)}, behind);
  for (float v : unseen.data) CHECK(v == 0.0f);
}

TEST_CASE("tsdf: on-surface, clamped free space, two-view average") {
  const double tau = 0.4;

  // Depth map equal to each voxel's own depth: every gap is 0.
  {
    DepthView view(kWide, RigidPose{});
    // Voxel centers along z: 1.125 + 0.25*k. Use one z-plane's depth at a time.
    for (int k = 0; k < 8; ++k) {
      view.depth.setConstant(static_cast<float>(1.125 + 0.25 * k));
      const TsdfEncoding<float> enc = encode_tsdf<float>({view}, kDesc, tau);
      for (int i = 0; i < 8; ++i)
        for (int j = 0; j < 8; ++j) {
          CHECK(enc.tsdf.at(0, i, j, k) == doctest::Approx(0.0).epsilon(1e-6));
          CHECK(enc.observed.at(0, i, j, k) == 1);
        }
    }
  }

  // Surface 10*tau behind the voxel: clamped to +tau.
  {
    const TsdfEncoding<float> enc = encode_tsdf<float>({constant_view(20.0f)}, kDesc, tau);
    for (float v : enc.tsdf.data) CHECK(v == doctest::Approx(tau));
  }

  // Two views at +0.5 tau and -0.5 tau: constant-profile average is 0.
  {
    DepthView a(kWide, RigidPose{}), b(kWide, RigidPose{});
    const double voxel_z = 1.125;  // k = 0 plane
    a.depth.setConstant(static_cast<float>(voxel_z + 0.5 * tau));
    b.depth.setConstant(static_cast<float>(voxel_z - 0.5 * tau));
    const TsdfEncoding<float> enc = encode_tsdf<float>({a, b}, kDesc, tau);
    for (int i = 0; i < 8; ++i)
      for (int j = 0; j < 8; ++j)
        CHECK(enc.tsdf.at(0, i, j, 0) == doctest::Approx(0.0).epsilon(1e-6));
  }

  // Observation more than tau behind the surface carries no weight.
  {
    const TsdfEncoding<float> enc = encode_tsdf<float>({constant_view(0.2f)}, kDesc, tau);
    for (std::int64_t v = 0; v < kDesc.voxel_count(); ++v) {
      CHECK(enc.tsdf.at(0, v) == 0.0f);
      CHECK(enc.observed.at(0, v) == 0);
    }
  }
}

TEST_CASE("tsdf output range is within the truncation band") {
  Rng rng(2);
  const double tau = 0.3;
  const TsdfEncoding<float> enc = encode_tsdf<float>(random_views(rng, 5), kDesc, tau);
  for (float v : enc.tsdf.data) {
    CHECK(v <= tau + 1e-7);
    CHECK(v >= -tau - 1e-7);
  }
}

TEST_CASE("tsdf along a ray is monotone non-increasing through the band") {
  const double tau = 0.4;
  const DepthView view = constant_view(2.0f);
  const TsdfEncoding<float> enc = encode_tsdf<float>({view}, kDesc, tau);
  // March along +z through on-axis voxels; within the band values decrease.
  float prev = std::numeric_limits<float>::infinity();
  for (int k = 0; k < 8; ++k) {
    const float v = enc.tsdf.at(0, 4, 4, k);
    if (!enc.observed.at(0, 4, 4, k)) break;
    CHECK(v <= prev + 1e-7f);
    prev = v;
  }
}

TEST_CASE("tdf+occ: sign split and exact signed reconstruction") {
  const double tau = 0.4;
  {
    // Fused TSDF = -0.3 tau: surface 0.3 tau in front of the voxel plane.
    DepthView view(kWide, RigidPose{});
    view.depth.setConstant(static_cast<float>(1.125 - 0.3 * tau));
    const DenseVolume<float> enc = encode_tdf_occ<float>({view}, kDesc, tau);
    CHECK(enc.at(0, 4, 4, 0) == doctest::Approx(0.3 * tau).epsilon(1e-5));
    CHECK(enc.at(1, 4, 4, 0) == 1.0f);
  }
  {
    const DenseVolume<float> enc = encode_tdf_occ<float>({constant_view(20.0f)}, kDesc, tau);
    CHECK(enc.at(0, 4, 4, 0) == doctest::Approx(tau));
    CHECK(enc.at(1, 4, 4, 0) == 0.0f);
  }
  // Identity: reconstructing the signed field from (t, o) equals encode_tsdf
  // bitwise on random view sets.
  Rng rng(33);
  for (int trial = 0; trial < 5; ++trial) {
    const std::vector<DepthView> views = random_views(rng, 4);
    const DenseVolume<float> enc = encode_tdf_occ<float>(views, kDesc, tau);
    const DenseVolume<float> recon = tdf_occ_to_signed(enc);
    const TsdfEncoding<float> direct = encode_tsdf<float>(views, kDesc, tau);
    CHECK(recon.data == direct.tsdf.data);
  }
}

TEST_CASE("histogram bin centers match the fixed layout") {
  const auto centers = histogram_bin_centers(0.4);
  CHECK(centers[0] == doctest::Approx(-0.4));
  CHECK(centers[1] == doctest::Approx(-0.35));
  CHECK(centers[8] == doctest::Approx(0.35));
  CHECK(centers[9] == doctest::Approx(0.4));
}

TEST_CASE("histogram: exact-center vote, midpoint split, outer-bin capture") {
  const double tau = 0.4;
  const double voxel_z = 1.125;
  const auto centers = histogram_bin_centers(tau);

  // Gap exactly at bin 2's center.
  {
    DepthView view(kWide, RigidPose{});
    view.depth.setConstant(static_cast<float>(voxel_z + centers[2]));
    const DenseVolume<float> enc = encode_histogram<float>({view}, kDesc, tau);
    for (int c = 0; c < 10; ++c)
      CHECK(enc.at(c, 4, 4, 0) == doctest::Approx(c == 2 ? 1.0 : 0.0).epsilon(1e-4));
  }
  // Gap midway between bins 5 and 6: half mass each.
  {
    DepthView view(kWide, RigidPose{});
    view.depth.setConstant(static_cast<float>(voxel_z + 0.5 * (centers[5] + centers[6])));
    const DenseVolume<float> enc = encode_histogram<float>({view}, kDesc, tau);
    CHECK(enc.at(5, 4, 4, 0) == doctest::Approx(0.5).epsilon(1e-3));
    CHECK(enc.at(6, 4, 4, 0) == doctest::Approx(0.5).epsilon(1e-3));
  }
  // Far beyond truncation on both sides: all mass in the outermost bins.
  {
    const DenseVolume<float> front = encode_histogram<float>({constant_view(20.0f)}, kDesc, tau);
    CHECK(front.at(9, 4, 4, 0) == 1.0f);
    const DenseVolume<float> behind = encode_histogram<float>({constant_view(0.2f)}, kDesc, tau);
    CHECK(behind.at(0, 4, 4, 0) == 1.0f);
  }
}

TEST_CASE("histogram mass equals the observed-view count everywhere") {
  Rng rng(44);
  const double tau = 0.3;
  const std::vector<DepthView> views = random_views(rng, 6);
  const DenseVolume<float> enc = encode_histogram<float>(views, kDesc, tau);
  for (std::int64_t v = 0; v < kDesc.voxel_count(); ++v) {
    // Independent count of observing views.
    const int i = static_cast<int>(v / 64), j = static_cast<int>((v / 8) % 8),
              k = static_cast<int>(v % 8);
    int observing = 0;
    for (const DepthView& view : views)
      if (observe_point(kDesc.voxel_center(i, j, k), view).map_depth) ++observing;
    double mass = 0.0;
    for (int c = 0; c < 10; ++c) mass += enc.at(c, v);
    CHECK(mass == doctest::Approx(observing).epsilon(1e-9));
  }
}

TEST_CASE("volfus shares the encode_tsdf code path bitwise") {
  Rng rng(55);
  const std::vector<DepthView> views = random_views(rng, 3);
  const double tau = 0.35;
  const VolfusResult<float> vf = volfus<float>(views, kDesc, tau);
  const TsdfEncoding<float> enc = encode_tsdf<float>(views, kDesc, tau);
  CHECK(vf.field.as_dense().data == enc.tsdf.data);
  CHECK(vf.observed.data == enc.observed.data);
  CHECK(vf.field.kind == FieldKind::TSDF);
  CHECK(vf.field.truncation == doctest::Approx(tau));
}

TEST_CASE("encoding channel counts by kind") {
  CHECK(encoding_channels(EncodingKind::Occupancy1D) == 1);
  CHECK(encoding_channels(EncodingKind::TSDF1D) == 1);
  CHECK(encoding_channels(EncodingKind::TDFOcc2D) == 2);
  CHECK(encoding_channels(EncodingKind::Histogram10D) == 10);
}
