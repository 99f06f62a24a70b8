#pragma once

#include "ofu/depth_io.hpp"
#include "ofu/sdf.hpp"

namespace ofu {

/// ASCII OFF writer.
inline void write_off(const std::filesystem::path& path, const TriangleMesh& mesh) {
  std::ofstream os(path);
  if (!os) throw DataError("cannot open for writing: " + path.string());
  os << "OFF\n" << mesh.vertices.size() << " " << mesh.triangles.size() << " 0\n";
  os.precision(9);
  for (const Vec3d& v : mesh.vertices) os << v.x() << " " << v.y() << " " << v.z() << "\n";
  for (const auto& t : mesh.triangles) os << "3 " << t[0] << " " << t[1] << " " << t[2] << "\n";
  if (!os) throw DataError("write failed: " + path.string());
}

/// Binary little-endian PLY writer.
inline void write_ply(const std::filesystem::path& path, const TriangleMesh& mesh) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw DataError("cannot open for writing: " + path.string());
  os << "ply\nformat binary_little_endian 1.0\n"
     << "element vertex " << mesh.vertices.size() << "\n"
     << "property float x\nproperty float y\nproperty float z\n"
     << "element face " << mesh.triangles.size() << "\n"
     << "property list uchar int vertex_indices\nend_header\n";
  for (const Vec3d& v : mesh.vertices) {
    for (int d = 0; d < 3; ++d) io_detail::write_pod(os, static_cast<float>(v[d]));
  }
  for (const auto& t : mesh.triangles) {
    io_detail::write_pod(os, static_cast<std::uint8_t>(3));
    for (int d = 0; d < 3; ++d) io_detail::write_pod(os, static_cast<std::int32_t>(t[d]));
  }
  if (!os) throw DataError("write failed: " + path.string());
}

}  // namespace ofu
