#pragma once

#include "ofu/fusion.hpp"
#include "ofu/sdf.hpp"

#include <array>
#include <unordered_map>

namespace ofu {

// ---------------------------------------------------------------------------
// Standard 256-case marching cubes over voxel-center samples with linear
// edge interpolation. The case table is generated once from first
// principles: on every cube face the iso-contour segments are paired and
// directed so that the inside region (value < iso) lies on the fixed side;
// ambiguous faces (four crossings) pair segments to isolate the inside
// corners, a face-local rule that both adjacent cubes agree on, keeping the
// mesh watertight. Chained segments form closed loops that are fan
// triangulated with outward (toward positive values) winding.
//
// Corner c = (x<<2)|(y<<1)|z at unit offset (x,y,z); a set config bit means
// the corner is inside.
// ---------------------------------------------------------------------------

namespace mc_detail {

struct CaseTable {
  // Per config: triangles as triples of cube-edge indices.
  std::array<std::vector<std::array<int, 3>>, 256> triangles;
  std::array<std::array<int, 2>, 12> edge_corners;
};

inline Vec3d corner_pos(int c) { return Vec3d((c >> 2) & 1, (c >> 1) & 1, c & 1); }

inline const CaseTable& case_table() {
  static const CaseTable table = [] {
    CaseTable t{};

    int edge_of[8][8];
    for (auto& row : edge_of) std::fill(row, row + 8, -1);
    int ne = 0;
    for (int a = 0; a < 8; ++a)
      for (const int bit : {4, 2, 1})
        if (!(a & bit)) {
          t.edge_corners[ne] = {a, a | bit};
          edge_of[a][a | bit] = edge_of[a | bit][a] = ne;
          ++ne;
        }

    // Faces: axis d in {x,y,z} (corner bit 4>>... ), side s, with corners in
    // cyclic perimeter order and the outward normal.
    struct Face {
      std::array<int, 4> cycle;
      Vec3d normal;
    };
    std::vector<Face> faces;
    const int axis_bit[3] = {4, 2, 1};
    for (int d = 0; d < 3; ++d)
      for (int s = 0; s < 2; ++s) {
        const int u = (d + 1) % 3, v = (d + 2) % 3;
        Face f;
        auto corner = [&](int cu, int cv) {
          int c = s ? axis_bit[d] : 0;
          if (cu) c |= axis_bit[u];
          if (cv) c |= axis_bit[v];
          return c;
        };
        f.cycle = {corner(0, 0), corner(1, 0), corner(1, 1), corner(0, 1)};
        f.normal = Vec3d::Zero();
        f.normal[d] = s ? 1.0 : -1.0;
        faces.push_back(f);
      }

    for (int config = 0; config < 256; ++config) {
      const auto inside = [&](int c) { return (config >> c) & 1; };

      // Directed contour segments per face, as (from edge, to edge).
      std::vector<std::array<int, 2>> segments;
      for (const Face& f : faces) {
        std::array<int, 4> per_edge;  // perimeter edge ids
        std::array<bool, 4> crossed;
        int count = 0;
        for (int i = 0; i < 4; ++i) {
          const int a = f.cycle[i], b = f.cycle[(i + 1) % 4];
          per_edge[i] = edge_of[a][b];
          crossed[i] = inside(a) != inside(b);
          count += crossed[i];
        }
        auto midpoint = [&](int e) {
          return 0.5 * (corner_pos(t.edge_corners[e][0]) + corner_pos(t.edge_corners[e][1]));
        };
        auto emit = [&](int ea, int eb, int q_corner) {
          // Direct ea->eb so the inside corner q sits on the fixed side.
          const Vec3d A = midpoint(ea), B = midpoint(eb);
          const Vec3d d_ab = B - A;
          const double side = (corner_pos(q_corner) - A).dot(f.normal.cross(d_ab));
          if (side < 0)
            segments.push_back({ea, eb});
          else
            segments.push_back({eb, ea});
        };
        if (count == 2) {
          int e[2], k = 0;
          for (int i = 0; i < 4; ++i)
            if (crossed[i]) e[k++] = per_edge[i];
          int q = -1;
          for (int i = 0; i < 4 && q < 0; ++i)
            if (inside(f.cycle[i])) q = f.cycle[i];
          emit(e[0], e[1], q);
        } else if (count == 4) {
          // Ambiguous face: isolate the (diagonal) inside corners. Edge i
          // and edge i+1 share perimeter corner i+1.
          for (int i = 0; i < 4; ++i) {
            const int shared = f.cycle[(i + 1) % 4];
            if (inside(shared)) emit(per_edge[i], per_edge[(i + 1) % 4], shared);
          }
        }
      }

      // Chain directed segments into closed loops.
      std::array<int, 12> next_from;
      next_from.fill(-1);
      for (const auto& s : segments) next_from[s[0]] = s[1];
      std::array<bool, 12> used{};
      for (const auto& s : segments) {
        if (used[s[0]]) continue;
        std::vector<int> loop;
        int e = s[0];
        while (!used[e]) {
          used[e] = true;
          loop.push_back(e);
          e = next_from[e];
        }
        for (std::size_t i = 1; i + 1 < loop.size(); ++i)
          t.triangles[config].push_back({loop[0], loop[i], loop[i + 1]});
      }
    }
    return t;
  }();
  return table;
}

}  // namespace mc_detail

/// Isosurface extraction at the given level (default: the zero levelset).
/// Sample points are voxel centers; all-positive or all-negative fields give
/// an empty mesh. Degenerate (zero-area) triangles are dropped; edge
/// interpolation falls back to the midpoint when both endpoints coincide.
template <class T>
TriangleMesh marching_cubes(const DenseVolume<T>& field, double iso = 0.0) {
  OFU_REQUIRE(field.channels == 1, "marching_cubes: expected a scalar field");
  const Vec3i r = field.desc.resolution;
  const auto& table = mc_detail::case_table();
  TriangleMesh mesh;
  std::unordered_map<std::int64_t, int> edge_vertex;

  auto sample = [&](int i, int j, int k) -> double {
    return static_cast<double>(field.at(0, i, j, k)) - iso;
  };
  // Unique id of a cube edge: owning sample point and axis.
  auto edge_key = [&](int i, int j, int k, int axis) -> std::int64_t {
    return (static_cast<std::int64_t>(i) * r.y() * r.z() + static_cast<std::int64_t>(j) * r.z() +
            k) *
               3 +
           axis;
  };

  for (int i = 0; i + 1 < r.x(); ++i)
    for (int j = 0; j + 1 < r.y(); ++j)
      for (int k = 0; k + 1 < r.z(); ++k) {
        int config = 0;
        for (int c = 0; c < 8; ++c)
          if (sample(i + ((c >> 2) & 1), j + ((c >> 1) & 1), k + (c & 1)) < 0.0)
            config |= 1 << c;
        if (config == 0 || config == 255) continue;

        for (const auto& tri : table.triangles[config]) {
          int ids[3];
          for (int v = 0; v < 3; ++v) {
            const auto [ca, cb] = table.edge_corners[tri[v]];
            const int ia = i + ((ca >> 2) & 1), ja = j + ((ca >> 1) & 1), ka = k + (ca & 1);
            const int ib = i + ((cb >> 2) & 1), jb = j + ((cb >> 1) & 1), kb = k + (cb & 1);
            const int axis = ia != ib ? 0 : (ja != jb ? 1 : 2);
            const std::int64_t key = edge_key(ia, ja, ka, axis);
            auto it = edge_vertex.find(key);
            if (it == edge_vertex.end()) {
              const double va = sample(ia, ja, ka), vb = sample(ib, jb, kb);
              const double denom = vb - va;
              const double s = std::abs(denom) < 1e-300 ? 0.5 : std::clamp(-va / denom, 0.0, 1.0);
              const Vec3d pa = field.desc.voxel_center(ia, ja, ka);
              const Vec3d pb = field.desc.voxel_center(ib, jb, kb);
              it = edge_vertex.emplace(key, static_cast<int>(mesh.vertices.size())).first;
              mesh.vertices.push_back(pa + s * (pb - pa));
            }
            ids[v] = it->second;
          }
          const Vec3d& a = mesh.vertices[ids[0]];
          const Vec3d area =
              (mesh.vertices[ids[1]] - a).cross(mesh.vertices[ids[2]] - a);
          if (0.5 * area.norm() <= 1e-12) continue;
          mesh.triangles.push_back(Eigen::Vector3i(ids[0], ids[1], ids[2]));
        }
      }
  return mesh;
}

template <class T>
TriangleMesh marching_cubes(const FusionField<T>& field, double iso = 0.0) {
  return marching_cubes(field.as_dense(), iso);
}

/// V - E + F over unique undirected edges (2 for a single genus-0 closed
/// surface).
inline long euler_characteristic(const TriangleMesh& mesh) {
  std::unordered_map<std::int64_t, int> edges;
  auto add = [&](int a, int b) {
    if (a > b) std::swap(a, b);
    edges.emplace(static_cast<std::int64_t>(a) << 32 | static_cast<std::uint32_t>(b), 1);
  };
  for (const auto& tri : mesh.triangles) {
    add(tri[0], tri[1]);
    add(tri[1], tri[2]);
    add(tri[2], tri[0]);
  }
  return static_cast<long>(mesh.vertices.size()) - static_cast<long>(edges.size()) +
         static_cast<long>(mesh.triangles.size());
}

}  // namespace ofu
