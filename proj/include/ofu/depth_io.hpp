#pragma once

#include "ofu/camera.hpp"

#include <cstring>
#include <filesystem>
#include <fstream>

namespace ofu {

// ---------------------------------------------------------------------------
// Depth-map container, little-endian binary:
//   magic "DVW1", u32 width, u32 height, f32 fx fy cx cy,
//   12 x f32 row-major rotation slots (9 used, last 3 zero),
//   3 x f32 translation, then height*width f32 depths.
// Invalid depths are written as the reserved bit pattern 0x7FC00001.
// ---------------------------------------------------------------------------

namespace io_detail {

template <class T>
void write_pod(std::ostream& os, const T& v) {
  os.write(reinterpret_cast<const char*>(&v), sizeof(T));
}

template <class T>
T read_pod(std::istream& is) {
  T v{};
  is.read(reinterpret_cast<char*>(&v), sizeof(T));
  if (!is) throw DataError("unexpected end of file");
  return v;
}

}  // namespace io_detail

inline void write_depth_view(const std::filesystem::path& path, const DepthView& view) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw DataError("cannot open for writing: " + path.string());
  os.write("DVW1", 4);
  io_detail::write_pod(os, static_cast<std::uint32_t>(view.intrinsics.width));
  io_detail::write_pod(os, static_cast<std::uint32_t>(view.intrinsics.height));
  io_detail::write_pod(os, static_cast<float>(view.intrinsics.fx));
  io_detail::write_pod(os, static_cast<float>(view.intrinsics.fy));
  io_detail::write_pod(os, static_cast<float>(view.intrinsics.cx));
  io_detail::write_pod(os, static_cast<float>(view.intrinsics.cy));
  for (int r = 0; r < 3; ++r)
    for (int c = 0; c < 3; ++c)
      io_detail::write_pod(os, static_cast<float>(view.pose.rotation(r, c)));
  for (int i = 0; i < 3; ++i) io_detail::write_pod(os, 0.0f);
  for (int i = 0; i < 3; ++i)
    io_detail::write_pod(os, static_cast<float>(view.pose.translation[i]));
  for (int r = 0; r < view.intrinsics.height; ++r)
    for (int c = 0; c < view.intrinsics.width; ++c) {
      float d = view.depth(r, c);
      if (!depth_is_valid(d)) d = invalid_depth();  // canonical sentinel bits
      io_detail::write_pod(os, d);
    }
  if (!os) throw DataError("write failed: " + path.string());
}

inline DepthView read_depth_view(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw DataError("cannot open: " + path.string());
  char magic[4];
  is.read(magic, 4);
  if (!is || std::memcmp(magic, "DVW1", 4) != 0)
    throw DataError("not a DVW1 file: " + path.string());
  const auto w = io_detail::read_pod<std::uint32_t>(is);
  const auto h = io_detail::read_pod<std::uint32_t>(is);
  const float fx = io_detail::read_pod<float>(is);
  const float fy = io_detail::read_pod<float>(is);
  const float cx = io_detail::read_pod<float>(is);
  const float cy = io_detail::read_pod<float>(is);
  RigidPose pose;
  for (int r = 0; r < 3; ++r)
    for (int c = 0; c < 3; ++c) pose.rotation(r, c) = io_detail::read_pod<float>(is);
  for (int i = 0; i < 3; ++i) io_detail::read_pod<float>(is);  // reserved slots
  for (int i = 0; i < 3; ++i) pose.translation[i] = io_detail::read_pod<float>(is);
  DepthView view(CameraIntrinsics(fx, fy, cx, cy, static_cast<int>(w), static_cast<int>(h)),
                 pose);
  for (std::uint32_t r = 0; r < h; ++r)
    for (std::uint32_t c = 0; c < w; ++c) view.depth(r, c) = io_detail::read_pod<float>(is);
  return view;
}

}  // namespace ofu
