#pragma once

#include "ofu/depth_io.hpp"
#include "ofu/fusion.hpp"
#include "ofu/octree_io.hpp"
#include "ofu/render.hpp"

#include <iomanip>
#include <sstream>

namespace ofu {

// ---------------------------------------------------------------------------
// Scene synthesis. Scenes live in a 3x3x3 m cube centered at the origin;
// cameras sit on a sphere around it.
// ---------------------------------------------------------------------------

struct SceneSpec {
  std::uint64_t seed = 0;
  std::vector<Primitive> primitives;

  SdfScene scene() const { return SdfScene{primitives}; }
};

/// Camera arrangement shared by inputs and ground-truth rendering.
struct ViewSetup {
  CameraIntrinsics intrinsics{150.0, 150.0, 160.0, 120.0, 320, 240};
  double ring_radius = 3.5;
  double elevation_deg = 20.0;  // input-view ring elevation above the equator
  double t_far = 8.0;
};

inline VolumeDesc scene_volume(int resolution, double extent = 3.0) {
  return VolumeDesc::cube(Vec3d(-extent / 2, -extent / 2, -extent / 2), extent, resolution);
}

namespace datagen_detail {

inline Mat3d random_rotation(Rng& rng) {
  // Shoemake's uniform quaternion sampling.
  const double u1 = rng.uniform(), u2 = rng.uniform(), u3 = rng.uniform();
  const double a = std::sqrt(1.0 - u1), b = std::sqrt(u1);
  const Eigen::Quaterniond q(b * std::cos(2 * M_PI * u3), a * std::sin(2 * M_PI * u2),
                             a * std::cos(2 * M_PI * u2), b * std::sin(2 * M_PI * u3));
  return q.normalized().toRotationMatrix();
}

inline double log_uniform(Rng& rng, double lo, double hi) {
  return lo * std::exp(rng.uniform() * std::log(hi / lo));
}

}  // namespace datagen_detail

/// Random watertight scene: 1-4 rigidly-posed primitives inside the cube.
/// Thin slabs and overlapping unions (concavities) come up regularly.
inline SceneSpec random_scene(std::uint64_t seed) {
  Rng rng(mix_seed(seed, 0x5ce9e));
  SceneSpec spec;
  spec.seed = seed;
  const int count = rng.uniform_int(1, 4);
  for (int p = 0; p < count; ++p) {
    Primitive prim;
    const double pick = rng.uniform();
    if (pick < 0.3) {
      prim.kind = PrimitiveKind::Sphere;
      prim.size = Vec3d::Constant(rng.uniform(0.25, 0.65));
    } else if (pick < 0.6) {
      prim.kind = PrimitiveKind::Box;
      prim.size = Vec3d(datagen_detail::log_uniform(rng, 0.06, 0.6),
                        datagen_detail::log_uniform(rng, 0.06, 0.6),
                        datagen_detail::log_uniform(rng, 0.06, 0.6));
    } else if (pick < 0.8) {
      prim.kind = PrimitiveKind::Cylinder;
      prim.size = Vec3d(rng.uniform(0.15, 0.5), rng.uniform(0.2, 0.7), 0.0);
    } else {
      prim.kind = PrimitiveKind::Capsule;
      prim.size = Vec3d(rng.uniform(0.1, 0.35), rng.uniform(0.2, 0.6), 0.0);
    }
    prim.rotation = datagen_detail::random_rotation(rng);
    const double margin = 1.2 - prim.bounding_radius();
    const double reach = std::max(margin, 0.0);
    prim.center =
        Vec3d(rng.uniform(-reach, reach), rng.uniform(-reach, reach), rng.uniform(-reach, reach));
    spec.primitives.push_back(prim);
  }
  return spec;
}

/// Evenly distributed directions on the unit sphere (Fibonacci spiral).
inline std::vector<Vec3d> fibonacci_directions(int n) {
  std::vector<Vec3d> dirs;
  const double golden = M_PI * (3.0 - std::sqrt(5.0));
  for (int i = 0; i < n; ++i) {
    const double z = 1.0 - 2.0 * (i + 0.5) / n;
    const double r = std::sqrt(std::max(0.0, 1.0 - z * z));
    dirs.emplace_back(r * std::cos(golden * i), r * std::sin(golden * i), z);
  }
  return dirs;
}

/// Camera poses looking at the scene center: an equally spaced ring at the
/// setup elevation for k <= 6, a Fibonacci sphere for larger k.
inline std::vector<RigidPose> make_view_poses(int k, const ViewSetup& setup = {}) {
  OFU_REQUIRE(k >= 1, "make_view_poses: need at least one view");
  std::vector<RigidPose> poses;
  if (k <= 6) {
    const double el = setup.elevation_deg * M_PI / 180.0;
    for (int i = 0; i < k; ++i) {
      const double az = 2.0 * M_PI * i / k;
      const Vec3d pos = setup.ring_radius *
                        Vec3d(std::cos(el) * std::cos(az), std::cos(el) * std::sin(az),
                              std::sin(el));
      poses.push_back(look_at(pos, Vec3d::Zero()));
    }
  } else {
    for (const Vec3d& dir : fibonacci_directions(k))
      poses.push_back(look_at(setup.ring_radius * dir, Vec3d::Zero()));
  }
  return poses;
}

/// Renders the scene from k cameras around it.
inline std::vector<DepthView> make_views(const SceneSpec& spec, int k,
                                         const ViewSetup& setup = {}) {
  const SdfScene scene = spec.scene();
  std::vector<DepthView> views;
  for (const RigidPose& pose : make_view_poses(k, setup))
    views.push_back(render_depth(scene, setup.intrinsics, pose, setup.t_far));
  return views;
}

// ---------------------------------------------------------------------------
// Sensor noise: depth-dependent Gaussian, sigma(d) = sigma0 * d^2 with sigma0
// in meters at 1 m. Invalid pixels are untouched.
// ---------------------------------------------------------------------------

struct NoiseModel {
  double sigma0 = 0.0;
};

inline DepthView apply_noise(const DepthView& view, const NoiseModel& model,
                             std::uint64_t seed) {
  OFU_REQUIRE(model.sigma0 >= 0.0, "apply_noise: sigma0 must be non-negative");
  DepthView out = view;
  if (model.sigma0 == 0.0) return out;
  Rng rng(mix_seed(seed, 0x4015e));
  for (int r = 0; r < view.intrinsics.height; ++r)
    for (int c = 0; c < view.intrinsics.width; ++c) {
      const float d = view.depth(r, c);
      if (!depth_is_valid(d)) continue;
      const double noisy = d + model.sigma0 * double(d) * double(d) * rng.normal();
      out.depth(r, c) = static_cast<float>(std::max(noisy, 0.01));
    }
  return out;
}

// ---------------------------------------------------------------------------
// Ground truth: noise-free fusion over many views, with never-observed
// voxels resolved by occlusion evidence (a voxel hidden behind surfaces in
// every view is interior). Validated against the exact SDF on primitive
// scenes.
// ---------------------------------------------------------------------------

template <class T = float>
FusionField<T> ground_truth_field(const std::vector<DepthView>& views, const VolumeDesc& desc,
                                  double tau) {
  OFU_REQUIRE(!views.empty(), "ground_truth_field: need views");
  DenseVolume<T> vol(desc, 1);
  parallel_for(desc.voxel_count(), [&](std::int64_t v) {
    const int i = static_cast<int>(v / (desc.resolution.y() * desc.resolution.z()));
    const int j = static_cast<int>((v / desc.resolution.z()) % desc.resolution.y());
    const int k = static_cast<int>(v % desc.resolution.z());
    const Vec3d center = desc.voxel_center(i, j, k);
    double acc = 0.0;
    int weight = 0;
    bool occluded = false;
    for (const DepthView& view : views) {
      const VoxelObservation obs = observe_point(center, view);
      if (!obs.signed_gap) continue;
      if (*obs.signed_gap < -tau) {
        occluded = true;
        continue;
      }
      acc += std::clamp(*obs.signed_gap, -tau, tau);
      ++weight;
    }
    if (weight > 0)
      vol.at(0, v) = static_cast<T>(acc / weight);
    else
      vol.at(0, v) = occluded ? static_cast<T>(-tau) : static_cast<T>(tau);
  });
  return FusionField<T>(FieldKind::TSDF, static_cast<T>(tau), std::move(vol));
}

/// Per-level ground truth by dense fusion of many noise-free renders
/// (rendered once; fused at each level's resolution and truncation).
template <class T = float>
std::vector<FusionField<T>> ground_truth_pyramid(const SceneSpec& spec,
                                                 const std::vector<int>& resolutions,
                                                 const ViewSetup& setup = {}, int gt_views = 80,
                                                 double tau_voxels = 4.0, double extent = 3.0) {
  const SdfScene scene = spec.scene();
  std::vector<DepthView> views;
  for (const RigidPose& pose : make_view_poses(gt_views, setup))
    views.push_back(render_depth(scene, setup.intrinsics, pose, setup.t_far));
  std::vector<FusionField<T>> fields;
  for (const int res : resolutions) {
    const VolumeDesc desc = scene_volume(res, extent);
    fields.push_back(ground_truth_field<T>(views, desc, tau_voxels * desc.voxel_size));
  }
  return fields;
}

/// Exact truncated SDF of a primitive scene (validation shortcut; exact for
/// non-overlapping unions).
template <class T = float>
FusionField<T> analytic_tsdf(const SceneSpec& spec, const VolumeDesc& desc, double tau) {
  const SdfScene scene = spec.scene();
  DenseVolume<T> vol(desc, 1);
  parallel_for(desc.voxel_count(), [&](std::int64_t v) {
    const int i = static_cast<int>(v / (desc.resolution.y() * desc.resolution.z()));
    const int j = static_cast<int>((v / desc.resolution.z()) % desc.resolution.y());
    const int k = static_cast<int>(v % desc.resolution.z());
    vol.at(0, v) = static_cast<T>(
        std::clamp(scene.signed_distance(desc.voxel_center(i, j, k)), -tau, tau));
  });
  return FusionField<T>(FieldKind::TSDF, static_cast<T>(tau), std::move(vol));
}

// ---------------------------------------------------------------------------
// Dataset on disk: manifest + per-scene directory with depth views and
// per-level ground-truth octree volumes.
// ---------------------------------------------------------------------------

struct DatasetConfig {
  std::uint64_t seed = 1;
  int train_count = 200;
  int test_count = 20;
  int views = 4;
  double noise_sigma0 = 0.02;
  std::vector<int> resolutions = {32, 64, 128};
  double tau_voxels = 4.0;
  double extent = 3.0;
  int gt_views = 80;
};

struct SceneEntry {
  int index = 0;
  std::uint64_t seed = 0;
  bool is_test = false;
  std::filesystem::path dir;
};

struct Dataset {
  DatasetConfig config;
  std::filesystem::path root;
  std::vector<SceneEntry> scenes;

  std::vector<SceneEntry> split(bool test) const {
    std::vector<SceneEntry> out;
    for (const auto& s : scenes)
      if (s.is_test == test) out.push_back(s);
    return out;
  }
};

namespace dataset_detail {

inline std::string scene_dir_name(int index) {
  std::ostringstream os;
  os << "scene_" << std::setw(4) << std::setfill('0') << index;
  return os.str();
}

inline std::string res_file_name(int res) {
  std::ostringstream os;
  os << "gt_" << std::setw(3) << std::setfill('0') << res << ".goc";
  return os.str();
}

inline std::string view_file_name(int v) {
  std::ostringstream os;
  os << "view_" << std::setw(3) << std::setfill('0') << v << ".dvw";
  return os.str();
}

inline const char* kind_name(PrimitiveKind k) {
  switch (k) {
    case PrimitiveKind::Sphere:
      return "sphere";
    case PrimitiveKind::Box:
      return "box";
    case PrimitiveKind::Cylinder:
      return "cylinder";
    case PrimitiveKind::Capsule:
      return "capsule";
  }
  return "sphere";
}

inline PrimitiveKind kind_from_name(const std::string& s) {
  if (s == "sphere") return PrimitiveKind::Sphere;
  if (s == "box") return PrimitiveKind::Box;
  if (s == "cylinder") return PrimitiveKind::Cylinder;
  if (s == "capsule") return PrimitiveKind::Capsule;
  throw DataError("unknown primitive kind: " + s);
}

}  // namespace dataset_detail

inline void write_scene_spec(const std::filesystem::path& path, const SceneSpec& spec) {
  std::ofstream os(path);
  if (!os) throw DataError("cannot open for writing: " + path.string());
  os << "seed " << spec.seed << "\n";
  os << std::setprecision(17);
  for (const Primitive& p : spec.primitives) {
    os << "primitive " << dataset_detail::kind_name(p.kind) << " center " << p.center.x() << " "
       << p.center.y() << " " << p.center.z() << " size " << p.size.x() << " " << p.size.y()
       << " " << p.size.z() << " rot";
    for (int r = 0; r < 3; ++r)
      for (int c = 0; c < 3; ++c) os << " " << p.rotation(r, c);
    os << "\n";
  }
}

inline SceneSpec read_scene_spec(const std::filesystem::path& path) {
  std::ifstream is(path);
  if (!is) throw DataError("cannot open: " + path.string());
  SceneSpec spec;
  std::string line;
  while (std::getline(is, line)) {
    std::istringstream ls(line);
    std::string tag;
    ls >> tag;
    if (tag == "seed") {
      ls >> spec.seed;
    } else if (tag == "primitive") {
      Primitive p;
      std::string kind, skip;
      ls >> kind >> skip;  // "center"
      p.kind = dataset_detail::kind_from_name(kind);
      ls >> p.center.x() >> p.center.y() >> p.center.z();
      ls >> skip;  // "size"
      ls >> p.size.x() >> p.size.y() >> p.size.z();
      ls >> skip;  // "rot"
      for (int r = 0; r < 3; ++r)
        for (int c = 0; c < 3; ++c) ls >> p.rotation(r, c);
      if (!ls) throw DataError("malformed primitive line in " + path.string());
      spec.primitives.push_back(p);
    }
  }
  return spec;
}

/// Generates and writes the full dataset. Purely a function of the config:
/// identical configs produce byte-identical trees.
inline Dataset write_dataset(const std::filesystem::path& root, const DatasetConfig& config,
                             const ViewSetup& setup = {},
                             const std::function<void(int, int)>& progress = nullptr) {
  namespace fs = std::filesystem;
  Dataset ds;
  ds.config = config;
  ds.root = root;
  fs::create_directories(root / "scenes");

  const int total = config.train_count + config.test_count;
  for (int i = 0; i < total; ++i) {
    const bool is_test = i >= config.train_count;
    // Disjoint seed ranges for the two splits.
    const std::uint64_t scene_seed =
        is_test ? config.seed + 1000000 + (i - config.train_count) : config.seed + i;
    SceneEntry entry{i, scene_seed, is_test, root / "scenes" / dataset_detail::scene_dir_name(i)};
    fs::create_directories(entry.dir);

    const SceneSpec spec = random_scene(scene_seed);
    write_scene_spec(entry.dir / "scene.txt", spec);

    const std::vector<DepthView> clean = make_views(spec, config.views, setup);
    for (int v = 0; v < config.views; ++v) {
      const DepthView noisy =
          apply_noise(clean[v], NoiseModel{config.noise_sigma0}, mix_seed(scene_seed, 77 + v));
      write_depth_view(entry.dir / dataset_detail::view_file_name(v), noisy);
    }

    const auto gt = ground_truth_pyramid<float>(spec, config.resolutions, setup, config.gt_views,
                                                config.tau_voxels, config.extent);
    for (std::size_t l = 0; l < config.resolutions.size(); ++l) {
      const GridOctree<float> oct =
          from_dense(gt[l].as_dense(), [](int, int, int) { return true; });
      write_grid_octree(entry.dir / dataset_detail::res_file_name(config.resolutions[l]), oct);
    }

    ds.scenes.push_back(entry);
    if (progress) progress(i + 1, total);
  }

  std::ofstream os(root / "manifest.txt");
  if (!os) throw DataError("cannot write manifest");
  os << "octfuse-dataset 1\n";
  os << "seed " << config.seed << "\n";
  os << "views " << config.views << "\n";
  os << std::setprecision(17);
  os << "noise_sigma0 " << config.noise_sigma0 << "\n";
  os << "tau_voxels " << config.tau_voxels << "\n";
  os << "extent " << config.extent << "\n";
  os << "gt_views " << config.gt_views << "\n";
  os << "resolutions";
  for (int r : config.resolutions) os << " " << r;
  os << "\n";
  os << "train_count " << config.train_count << "\n";
  os << "test_count " << config.test_count << "\n";
  for (const auto& s : ds.scenes)
    os << "scene " << s.index << " seed " << s.seed << " split "
       << (s.is_test ? "test" : "train") << "\n";
  return ds;
}

inline Dataset read_dataset(const std::filesystem::path& root) {
  std::ifstream is(root / "manifest.txt");
  if (!is) throw DataError("no manifest at " + root.string());
  Dataset ds;
  ds.root = root;
  std::string line;
  while (std::getline(is, line)) {
    std::istringstream ls(line);
    std::string tag;
    ls >> tag;
    if (tag == "seed")
      ls >> ds.config.seed;
    else if (tag == "views")
      ls >> ds.config.views;
    else if (tag == "noise_sigma0")
      ls >> ds.config.noise_sigma0;
    else if (tag == "tau_voxels")
      ls >> ds.config.tau_voxels;
    else if (tag == "extent")
      ls >> ds.config.extent;
    else if (tag == "gt_views")
      ls >> ds.config.gt_views;
    else if (tag == "resolutions") {
      ds.config.resolutions.clear();
      int r;
      while (ls >> r) ds.config.resolutions.push_back(r);
    } else if (tag == "train_count")
      ls >> ds.config.train_count;
    else if (tag == "test_count")
      ls >> ds.config.test_count;
    else if (tag == "scene") {
      SceneEntry e;
      std::string skip, split;
      ls >> e.index >> skip >> e.seed >> skip >> split;
      e.is_test = split == "test";
      e.dir = root / "scenes" / dataset_detail::scene_dir_name(e.index);
      ds.scenes.push_back(e);
    }
  }
  if (ds.scenes.empty()) throw DataError("manifest lists no scenes: " + root.string());
  return ds;
}

inline std::vector<DepthView> load_scene_views(const SceneEntry& entry, int views) {
  std::vector<DepthView> out;
  for (int v = 0; v < views; ++v)
    out.push_back(read_depth_view(entry.dir / dataset_detail::view_file_name(v)));
  return out;
}

inline DenseVolume<float> load_scene_gt(const SceneEntry& entry, int resolution) {
  return to_dense(
      read_grid_octree<float>(entry.dir / dataset_detail::res_file_name(resolution)));
}

}  // namespace ofu
