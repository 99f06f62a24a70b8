#pragma once

#include "ofu/depth_io.hpp"
#include "ofu/grid_octree.hpp"

namespace ofu {

// ---------------------------------------------------------------------------
// Octree volume file, little-endian binary:
//   magic "GOC1",
//   VolumeDesc: 3 x f32 origin, f32 voxel_size, 3 x u32 resolution,
//   u32 D, H, W, n,
//   per tree 12 bytes of structure bits (96 bits; 73 used, rest zero),
//   f32 feature store in canonical leaf order.
// Bit i of a tree lives in byte i>>3 at position i&7, with
//   i = 0 for the root, i = 1 + c1 for level 1, i = 9 + 8*c1 + c2 for level 2.
// ---------------------------------------------------------------------------

namespace oct_io_detail {

inline std::array<std::uint8_t, 12> pack_bits(const TreeBits& bits) {
  std::array<std::uint8_t, 12> bytes{};
  auto set = [&](int i) { bytes[i >> 3] |= std::uint8_t(1) << (i & 7); };
  if (bits.root) set(0);
  for (int c1 = 0; c1 < 8; ++c1)
    if (bits.l1_bit(c1)) set(1 + c1);
  for (int c1 = 0; c1 < 8; ++c1)
    for (int c2 = 0; c2 < 8; ++c2)
      if (bits.l2_bit(c1, c2)) set(9 + 8 * c1 + c2);
  return bytes;
}

inline TreeBits unpack_bits(const std::array<std::uint8_t, 12>& bytes) {
  auto get = [&](int i) { return (bytes[i >> 3] >> (i & 7)) & 1; };
  TreeBits bits;
  if (get(0)) bits.set_root();
  for (int c1 = 0; c1 < 8; ++c1)
    if (get(1 + c1)) bits.set_l1(c1);
  for (int c1 = 0; c1 < 8; ++c1)
    for (int c2 = 0; c2 < 8; ++c2)
      if (get(9 + 8 * c1 + c2)) bits.set_l2(c1, c2);
  return bits;
}

}  // namespace oct_io_detail

template <class T>
void write_grid_octree(const std::filesystem::path& path, const GridOctree<T>& oct) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw DataError("cannot open for writing: " + path.string());
  os.write("GOC1", 4);
  for (int i = 0; i < 3; ++i) io_detail::write_pod(os, static_cast<float>(oct.desc.origin[i]));
  io_detail::write_pod(os, static_cast<float>(oct.desc.voxel_size));
  for (int i = 0; i < 3; ++i)
    io_detail::write_pod(os, static_cast<std::uint32_t>(oct.desc.resolution[i]));
  io_detail::write_pod(os, static_cast<std::uint32_t>(oct.grid_dims.x()));
  io_detail::write_pod(os, static_cast<std::uint32_t>(oct.grid_dims.y()));
  io_detail::write_pod(os, static_cast<std::uint32_t>(oct.grid_dims.z()));
  io_detail::write_pod(os, static_cast<std::uint32_t>(oct.channels));
  for (const TreeBits& bits : oct.trees) {
    const auto bytes = oct_io_detail::pack_bits(bits);
    os.write(reinterpret_cast<const char*>(bytes.data()), bytes.size());
  }
  for (const T& v : oct.features) io_detail::write_pod(os, static_cast<float>(v));
  if (!os) throw DataError("write failed: " + path.string());
}

template <class T = float>
GridOctree<T> read_grid_octree(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw DataError("cannot open: " + path.string());
  char magic[4];
  is.read(magic, 4);
  if (!is || std::memcmp(magic, "GOC1", 4) != 0)
    throw DataError("not a GOC1 file: " + path.string());
  Vec3d origin;
  for (int i = 0; i < 3; ++i) origin[i] = io_detail::read_pod<float>(is);
  const double voxel_size = io_detail::read_pod<float>(is);
  Vec3i res;
  for (int i = 0; i < 3; ++i) res[i] = static_cast<int>(io_detail::read_pod<std::uint32_t>(is));
  const int D = static_cast<int>(io_detail::read_pod<std::uint32_t>(is));
  const int H = static_cast<int>(io_detail::read_pod<std::uint32_t>(is));
  const int W = static_cast<int>(io_detail::read_pod<std::uint32_t>(is));
  const int n = static_cast<int>(io_detail::read_pod<std::uint32_t>(is));
  if (res != 8 * Vec3i(D, H, W)) throw DataError("GOC1: resolution/grid mismatch");

  GridOctree<T> oct(VolumeDesc(origin, voxel_size, res), n);
  for (TreeBits& bits : oct.trees) {
    std::array<std::uint8_t, 12> bytes;
    is.read(reinterpret_cast<char*>(bytes.data()), bytes.size());
    if (!is) throw DataError("GOC1: truncated structure table");
    bits = oct_io_detail::unpack_bits(bytes);
    if (!bits.valid()) throw DataError("GOC1: invalid structure bits");
  }
  oct.rebuild_offsets();
  oct.features.resize(static_cast<std::size_t>(oct.total_leaves()) * n);
  for (T& v : oct.features) v = static_cast<T>(io_detail::read_pod<float>(is));
  return oct;
}

}  // namespace ofu
