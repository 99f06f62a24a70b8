#pragma once

#include "ofu/camera.hpp"
#include "ofu/grid_octree.hpp"

#include <variant>

namespace ofu {

enum class FieldKind { TSDF, Occupancy };

/// A scalar field over a voxel volume, dense or octree-backed. TSDF fields
/// carry their truncation threshold and take values in [-tau, tau];
/// occupancy fields take values in [0, 1].
template <class T>
struct FusionField {
  VolumeDesc desc;
  FieldKind kind = FieldKind::TSDF;
  T truncation = T(0);
  std::variant<DenseVolume<T>, GridOctree<T>> values;

  FusionField() = default;
  FusionField(FieldKind k, T tau, DenseVolume<T> dense)
      : desc(dense.desc), kind(k), truncation(tau), values(std::move(dense)) {}
  FusionField(FieldKind k, T tau, GridOctree<T> oct)
      : desc(oct.desc), kind(k), truncation(tau), values(std::move(oct)) {}

  bool is_octree() const { return std::holds_alternative<GridOctree<T>>(values); }
  const GridOctree<T>& octree() const { return std::get<GridOctree<T>>(values); }

  DenseVolume<T> as_dense() const {
    if (is_octree()) return to_dense(octree());
    return std::get<DenseVolume<T>>(values);
  }
};

enum class EncodingKind { Occupancy1D, TSDF1D, TDFOcc2D, Histogram10D };

inline int encoding_channels(EncodingKind kind) {
  switch (kind) {
    case EncodingKind::Occupancy1D:
      return 1;
    case EncodingKind::TSDF1D:
      return 1;
    case EncodingKind::TDFOcc2D:
      return 2;
    case EncodingKind::Histogram10D:
      return 10;
  }
  return 1;
}

/// Which volumetric input encoding to build and its truncation threshold.
/// tau defaults to four voxel sizes.
struct EncodingSpec {
  EncodingKind kind = EncodingKind::TSDF1D;
  double truncation = 0.0;
  int histogram_bins = 10;

  static EncodingSpec with_default_tau(EncodingKind k, const VolumeDesc& desc,
                                       double tau_voxels = 4.0) {
    EncodingSpec spec;
    spec.kind = k;
    spec.truncation = tau_voxels * desc.voxel_size;
    OFU_REQUIRE(spec.truncation > 0.0, "EncodingSpec: truncation must be positive");
    return spec;
  }
};

// ---------------------------------------------------------------------------
// Input encodings. All encoders share the same per-view visibility logic:
// a view contributes at a voxel only where the voxel projects onto a valid
// depth pixel in front of the camera.
// ---------------------------------------------------------------------------

/// Occupancy fusion: a voxel is free (0) if any view observes free space in
/// front of it by more than one voxel size and no view is needed to confirm;
/// it is occupied (1) iff some view places it within a voxel of or behind the
/// surface and no view sees it as free space.
template <class T = float>
DenseVolume<T> encode_occupancy(const std::vector<DepthView>& views, const VolumeDesc& desc) {
  OFU_REQUIRE(!views.empty(), "encode_occupancy: need at least one view");
  DenseVolume<T> vol(desc, 1);
  const double s = desc.voxel_size;
  parallel_for(desc.voxel_count(), [&](std::int64_t v) {
    const int i = static_cast<int>(v / (desc.resolution.y() * desc.resolution.z()));
    const int j = static_cast<int>((v / desc.resolution.z()) % desc.resolution.y());
    const int k = static_cast<int>(v % desc.resolution.z());
    const Vec3d center = desc.voxel_center(i, j, k);
    bool any_behind = false;
    bool any_free = false;
    for (const DepthView& view : views) {
      const VoxelObservation obs = observe_point(center, view);
      if (!obs.signed_gap) continue;
      if (*obs.signed_gap <= s)
        any_behind = true;
      else
        any_free = true;
    }
    vol.at(0, v) = (any_behind && !any_free) ? T(1) : T(0);
  });
  return vol;
}

/// TSDF fusion result: the averaged field and the per-voxel observed mask
/// (voxels where at least one view contributed weight).
template <class T>
struct TsdfEncoding {
  DenseVolume<T> tsdf;
  DenseVolume<std::uint8_t> observed;
};

/// Averaged truncated signed distances with the constant weight profile:
/// each view contributes clamp(gap, -tau, tau) with weight 1 where the voxel
/// is observed and at most tau behind the surface. Unobserved voxels are 0.
template <class T = float>
TsdfEncoding<T> encode_tsdf(const std::vector<DepthView>& views, const VolumeDesc& desc,
                            double tau) {
  OFU_REQUIRE(!views.empty(), "encode_tsdf: need at least one view");
  OFU_REQUIRE(tau > 0.0, "encode_tsdf: truncation must be positive");
  TsdfEncoding<T> out{DenseVolume<T>(desc, 1), DenseVolume<std::uint8_t>(desc, 1)};
  parallel_for(desc.voxel_count(), [&](std::int64_t v) {
    const int i = static_cast<int>(v / (desc.resolution.y() * desc.resolution.z()));
    const int j = static_cast<int>((v / desc.resolution.z()) % desc.resolution.y());
    const int k = static_cast<int>(v % desc.resolution.z());
    const Vec3d center = desc.voxel_center(i, j, k);
    double acc = 0.0;
    int weight = 0;
    for (const DepthView& view : views) {
      const VoxelObservation obs = observe_point(center, view);
      if (!obs.signed_gap || *obs.signed_gap < -tau) continue;
      acc += std::clamp(*obs.signed_gap, -tau, tau);
      ++weight;
    }
    out.tsdf.at(0, v) = weight > 0 ? static_cast<T>(acc / weight) : T(0);
    out.observed.at(0, v) = weight > 0 ? 1 : 0;
  });
  return out;
}

/// Two-channel split of the fused TSDF: channel 0 holds the truncated
/// unsigned distance t(v), channel 1 the occupancy o(v) = [fused <= 0].
/// The signed field is recovered exactly as o ? -t : t.
template <class T = float>
DenseVolume<T> encode_tdf_occ(const std::vector<DepthView>& views, const VolumeDesc& desc,
                              double tau) {
  const TsdfEncoding<T> fused = encode_tsdf<T>(views, desc, tau);
  DenseVolume<T> vol(desc, 2);
  parallel_for(desc.voxel_count(), [&](std::int64_t v) {
    const T f = fused.tsdf.at(0, v);
    vol.at(0, v) = std::abs(f);
    vol.at(1, v) = f <= T(0) ? T(1) : T(0);
  });
  return vol;
}

/// Reconstructs the signed field from a TDF+occupancy encoding.
template <class T>
DenseVolume<T> tdf_occ_to_signed(const DenseVolume<T>& enc) {
  OFU_REQUIRE(enc.channels == 2, "tdf_occ_to_signed: expected 2 channels");
  DenseVolume<T> out(enc.desc, 1);
  parallel_for(enc.voxel_count(), [&](std::int64_t v) {
    out.at(0, v) = enc.at(1, v) > T(0.5) ? -enc.at(0, v) : enc.at(0, v);
  });
  return out;
}

/// Centers of the 10 histogram bins: the outer bins sit at -tau and +tau and
/// absorb out-of-band votes; the 8 interior bins uniformly partition the band.
inline std::array<double, 10> histogram_bin_centers(double tau) {
  std::array<double, 10> centers;
  centers[0] = -tau;
  for (int m = 0; m < 8; ++m) centers[1 + m] = -tau + (m + 0.5) * (2.0 * tau / 8.0);
  centers[9] = tau;
  return centers;
}

/// 10-bin signed-distance histogram. Each observing view casts total mass 1,
/// split linearly between the two nearest bin centers; values at or beyond
/// the truncation go entirely to the outermost bin. Bins run most-negative
/// to most-positive.
template <class T = float>
DenseVolume<T> encode_histogram(const std::vector<DepthView>& views, const VolumeDesc& desc,
                                double tau) {
  OFU_REQUIRE(!views.empty(), "encode_histogram: need at least one view");
  OFU_REQUIRE(tau > 0.0, "encode_histogram: truncation must be positive");
  const auto centers = histogram_bin_centers(tau);
  DenseVolume<T> vol(desc, 10);
  parallel_for(desc.voxel_count(), [&](std::int64_t v) {
    const int i = static_cast<int>(v / (desc.resolution.y() * desc.resolution.z()));
    const int j = static_cast<int>((v / desc.resolution.z()) % desc.resolution.y());
    const int k = static_cast<int>(v % desc.resolution.z());
    const Vec3d center = desc.voxel_center(i, j, k);
    double bins[10] = {0};
    for (const DepthView& view : views) {
      const VoxelObservation obs = observe_point(center, view);
      if (!obs.signed_gap) continue;
      const double d = std::clamp(*obs.signed_gap, -tau, tau);
      if (d <= centers[0]) {
        bins[0] += 1.0;
        continue;
      }
      if (d >= centers[9]) {
        bins[9] += 1.0;
        continue;
      }
      int b = 0;
      while (b < 9 && centers[b + 1] < d) ++b;
      const double w_hi = (d - centers[b]) / (centers[b + 1] - centers[b]);
      bins[b] += 1.0 - w_hi;
      bins[b + 1] += w_hi;
    }
    for (int c = 0; c < 10; ++c) vol.at(c, v) = static_cast<T>(bins[c]);
  });
  return vol;
}

/// Dispatch over encoding kinds; used by the per-level network inputs.
template <class T = float>
DenseVolume<T> encode(const EncodingSpec& spec, const std::vector<DepthView>& views,
                      const VolumeDesc& desc) {
  switch (spec.kind) {
    case EncodingKind::Occupancy1D:
      return encode_occupancy<T>(views, desc);
    case EncodingKind::TSDF1D:
      return encode_tsdf<T>(views, desc, spec.truncation).tsdf;
    case EncodingKind::TDFOcc2D:
      return encode_tdf_occ<T>(views, desc, spec.truncation);
    case EncodingKind::Histogram10D:
      return encode_histogram<T>(views, desc, spec.truncation);
  }
  throw ContractError("encode: unknown encoding kind");
}

// ---------------------------------------------------------------------------
// VolFus baseline: volumetric averaging of per-view TSDFs. Identical code
// path to encode_tsdf, wrapped as a FusionField.
// ---------------------------------------------------------------------------

template <class T>
struct VolfusResult {
  FusionField<T> field;
  DenseVolume<std::uint8_t> observed;
};

template <class T = float>
VolfusResult<T> volfus(const std::vector<DepthView>& views, const VolumeDesc& desc, double tau) {
  TsdfEncoding<T> enc = encode_tsdf<T>(views, desc, tau);
  return VolfusResult<T>{
      FusionField<T>(FieldKind::TSDF, static_cast<T>(tau), std::move(enc.tsdf)),
      std::move(enc.observed)};
}

}  // namespace ofu
