#pragma once

#include <CLI11.hpp>

#include "ofu/marching_cubes.hpp"
#include "ofu/mesh_io.hpp"
#include "ofu/pipeline.hpp"

#include <iostream>

namespace ofu::cli {

inline constexpr int kExitOk = 0;
inline constexpr int kExitConfig = 2;
inline constexpr int kExitData = 3;
inline constexpr int kExitNumeric = 4;

inline EncodingKind parse_encoding(const std::string& s) {
  if (s == "occ") return EncodingKind::Occupancy1D;
  if (s == "tsdf") return EncodingKind::TSDF1D;
  if (s == "tdfocc") return EncodingKind::TDFOcc2D;
  if (s == "hist") return EncodingKind::Histogram10D;
  throw ContractError("unknown encoding: " + s);
}

inline std::vector<int> parse_resolutions(const std::string& s) {
  std::vector<int> out;
  std::istringstream is(s);
  std::string item;
  while (std::getline(is, item, ',')) {
    const int r = std::stoi(item);
    if (r < 8 || r % 8 != 0) throw ContractError("resolutions must be positive multiples of 8");
    out.push_back(r);
  }
  if (out.empty()) throw ContractError("empty resolution list");
  for (std::size_t i = 1; i < out.size(); ++i)
    if (out[i] != 2 * out[i - 1])
      throw ContractError("resolutions must double between pyramid levels");
  return out;
}

inline std::vector<int> parse_epochs(const std::string& s) {
  std::vector<int> out;
  std::istringstream is(s);
  std::string item;
  while (std::getline(is, item, ',')) out.push_back(std::stoi(item));
  if (out.empty()) throw ContractError("empty epoch list");
  return out;
}

// ---------------------------------------------------------------------------
// datagen
// ---------------------------------------------------------------------------

struct DatagenArgs {
  std::string out;
  std::uint64_t seed = 0;
  int scenes = 200;
  int test_scenes = 20;
  int views = 4;
  double noise_sigma = 0.02;
  std::string resolutions = "32,64,128";
  double truncation_voxels = 4.0;
  int gt_views = 80;
};

inline int cmd_datagen(const DatagenArgs& args) {
  DatasetConfig config;
  config.seed = args.seed;
  config.train_count = args.scenes;
  config.test_count = args.test_scenes;
  config.views = args.views;
  config.noise_sigma0 = args.noise_sigma;
  config.resolutions = parse_resolutions(args.resolutions);
  config.tau_voxels = args.truncation_voxels;
  config.gt_views = args.gt_views;
  if (config.train_count < 1 || config.test_count < 0)
    throw ContractError("datagen: need at least one training scene");
  if (config.views < 1) throw ContractError("datagen: need at least one view");

  write_dataset(args.out, config, {}, [](int done, int total) {
    if (done % 10 == 0 || done == total)
      std::cout << "datagen: " << done << "/" << total << " scenes\n";
  });
  std::cout << "datagen: wrote " << (config.train_count + config.test_count) << " scenes ("
            << config.train_count << " train / " << config.test_count << " test) to " << args.out
            << "\n";
  return kExitOk;
}

// ---------------------------------------------------------------------------
// fuse
// ---------------------------------------------------------------------------

struct FuseArgs {
  std::string data;
  int scene = 0;
  std::string fuser = "volfus";
  std::string encoding = "tsdf";
  int resolution = 64;
  int views = -1;
  double tvl1_lambda = 0.4;
  int tvl1_iters = 700;
  double truncation_voxels = 4.0;
  std::string checkpoint;
  std::string out;
  std::string mesh_out;
};

inline int cmd_fuse(const FuseArgs& args) {
  if (args.fuser != "volfus" && args.fuser != "tvl1" && args.fuser != "net")
    throw ContractError("fuse: --fuser must be volfus, tvl1 or net");
  if (args.fuser == "net" && args.checkpoint.empty())
    throw ContractError("fuse: --fuser net requires --checkpoint");
  if (args.fuser == "net" && !std::filesystem::exists(args.checkpoint))
    throw DataError("fuse: checkpoint not found: " + args.checkpoint);

  const Dataset ds = read_dataset(args.data);
  if (args.scene < 0 || args.scene >= static_cast<int>(ds.scenes.size()))
    throw DataError("fuse: scene index out of range");
  const SceneEntry& entry = ds.scenes[args.scene];
  const int views = args.views > 0 ? std::min(args.views, ds.config.views) : ds.config.views;
  const std::vector<DepthView> depth = load_scene_views(entry, views);
  const VolumeDesc desc = scene_volume(args.resolution, ds.config.extent);
  const double tau = args.truncation_voxels * desc.voxel_size;

  FusionField<float> field;
  if (args.fuser == "net") {
    PyramidNetwork<float> net = read_checkpoint<float>(args.checkpoint);
    net.encoding = parse_encoding(args.encoding);
    net.tau_voxels = static_cast<int>(args.truncation_voxels);
    const int drop = static_cast<int>(net.stages.size()) - 1;
    const int coarse_res = args.resolution >> drop;
    if (coarse_res < 8 || (coarse_res << drop) != args.resolution)
      throw ContractError("fuse: resolution incompatible with checkpoint depth");
    field = fuse_with_network(net, depth, scene_volume(coarse_res, ds.config.extent));
  } else {
    VolfusResult<float> vf = volfus<float>(depth, desc, tau);
    if (args.fuser == "tvl1") {
      TvL1Params params;
      params.lambda = args.tvl1_lambda;
      params.iterations = args.tvl1_iters;
      std::cout << "tvl1: lambda " << params.lambda << ", iterations " << params.iterations
                << "\n";
      field = tvl1_fuse(vf.field, vf.observed, params);
    } else {
      field = std::move(vf.field);
    }
  }

  bool have_gt = false;
  for (const int r : ds.config.resolutions) have_gt |= r == args.resolution;
  if (have_gt) {
    const FusionField<float> gt(FieldKind::TSDF, static_cast<float>(tau),
                                load_scene_gt(entry, args.resolution));
    std::cout << "mad_mm " << 1000.0 * mad(field, gt) << "\n";
  }

  if (!args.out.empty()) {
    GridOctree<float> oct =
        field.is_octree() ? field.octree()
                          : from_dense(field.as_dense(), [](int, int, int) { return true; });
    write_grid_octree(args.out, oct);
    std::cout << "fuse: wrote " << args.out << "\n";
  }
  if (!args.mesh_out.empty()) {
    const TriangleMesh mesh = marching_cubes(field);
    if (args.mesh_out.ends_with(".off"))
      write_off(args.mesh_out, mesh);
    else
      write_ply(args.mesh_out, mesh);
    std::cout << "fuse: wrote " << args.mesh_out << " (" << mesh.triangles.size()
              << " triangles)\n";
  }
  return kExitOk;
}

// ---------------------------------------------------------------------------
// train
// ---------------------------------------------------------------------------

struct TrainArgs {
  std::string data;
  std::string out;
  std::uint64_t seed = 0;
  std::string epochs = "50,25";
  double lr = 1e-4;
  std::string encoding = "tsdf";
  std::string output_kind = "tsdf";
  double truncation_voxels = 4.0;
  int width = 16;
  int views = -1;
  bool resume = false;
  std::string log;
};

inline int cmd_train(const TrainArgs& args) {
  const Dataset ds = read_dataset(args.data);
  const EncodingKind enc = parse_encoding(args.encoding);
  const FieldKind kind = args.output_kind == "occ" ? FieldKind::Occupancy : FieldKind::TSDF;
  TrainSchedule schedule;
  schedule.epochs_per_stage = parse_epochs(args.epochs);
  schedule.lr = args.lr;
  schedule.seed = args.seed;
  const int levels = static_cast<int>(schedule.epochs_per_stage.size());
  if (levels > static_cast<int>(ds.config.resolutions.size()))
    throw ContractError("train: schedule has more stages than dataset resolutions");

  const std::vector<SceneEntry> train_scenes = ds.split(false);
  if (train_scenes.empty()) throw DataError("train: dataset has no training scenes");
  const std::vector<int> res = pyramid_resolutions(ds, levels);

  PyramidNetwork<float> net;
  TrainState<float> state;
  const TrainState<float>* resume_ptr = nullptr;
  const std::string state_path = args.out + ".state";
  if (args.resume) {
    net = read_checkpoint<float>(args.out);
    net.encoding = enc;
    state = read_train_state<float>(state_path);
    resume_ptr = &state;
  } else {
    net = PyramidNetwork<float>::make(levels, scene_volume(res[0], ds.config.extent), enc, kind,
                                      args.width, static_cast<int>(args.truncation_voxels));
  }
  set_pyramid_geometry(net, scene_volume(res[0], ds.config.extent),
                       static_cast<int>(args.truncation_voxels));

  std::ofstream log;
  if (!args.log.empty()) {
    log.open(args.log, args.resume ? std::ios::app : std::ios::trunc);
    if (!log) throw DataError("train: cannot open log " + args.log);
    log << "schedule";
    for (int e : schedule.epochs_per_stage) log << " " << e;
    log << " lr " << schedule.lr << " seed " << schedule.seed << "\n";
  }

  const SampleLoader<float> loader =
      make_sample_loader<float>(ds, train_scenes, enc, levels, kind, args.views);
  const TrainState<float> final_state = train_coarse_to_fine<float>(
      net, loader, static_cast<int>(train_scenes.size()), schedule,
      [&](int stage, int epoch, double loss, const TrainState<float>& snap) {
        std::cout << "train: stage " << stage << " epoch " << epoch << " loss " << loss << "\n";
        if (log) log << "stage " << stage << " epoch " << epoch << " loss " << loss << "\n";
        // Persist after every epoch so training can resume mid-schedule.
        write_checkpoint(args.out, net);
        write_train_state(state_path, snap);
        return true;
      },
      resume_ptr);

  write_checkpoint(args.out, net);
  write_train_state(state_path, final_state);
  std::cout << "train: wrote " << args.out << "\n";
  return kExitOk;
}

// ---------------------------------------------------------------------------
// eval
// ---------------------------------------------------------------------------

struct EvalArgs {
  std::string data;
  std::string checkpoint;
  std::string encoding = "tsdf";
  std::string out;
  double tvl1_lambda = -1.0;  // <= 0: pick by grid search on training scenes
  int tvl1_iters = 700;
  double truncation_voxels = 4.0;
  int views = -1;
  std::string resolutions;  // default: dataset resolutions
};

inline int cmd_eval(const EvalArgs& args) {
  const Dataset ds = read_dataset(args.data);
  const std::vector<SceneEntry> test_scenes = ds.split(true);
  if (test_scenes.empty()) throw DataError("eval: dataset has no test scenes");
  const std::vector<int> resolutions =
      args.resolutions.empty() ? ds.config.resolutions : parse_resolutions(args.resolutions);
  const int views = args.views > 0 ? std::min(args.views, ds.config.views) : ds.config.views;

  std::optional<PyramidNetwork<float>> net;
  if (!args.checkpoint.empty()) {
    net = read_checkpoint<float>(args.checkpoint);
    net->encoding = parse_encoding(args.encoding);
    net->tau_voxels = static_cast<int>(args.truncation_voxels);
  }

  std::vector<MetricsReport> reports;
  std::vector<double> lambda_per_res(resolutions.size(), args.tvl1_lambda);

  for (std::size_t ri = 0; ri < resolutions.size(); ++ri) {
    const int res = resolutions[ri];
    const VolumeDesc desc = scene_volume(res, ds.config.extent);
    const double tau = args.truncation_voxels * desc.voxel_size;

    if (lambda_per_res[ri] <= 0.0) {
      // Cross-validate the data weight on (up to) three training scenes.
      std::vector<FusionField<float>> initials;
      std::vector<DenseVolume<std::uint8_t>> masks;
      std::vector<DenseVolume<float>> refs;
      const std::vector<SceneEntry> train_scenes = ds.split(false);
      for (std::size_t s = 0; s < std::min<std::size_t>(3, train_scenes.size()); ++s) {
        VolfusResult<float> vf =
            volfus<float>(load_scene_views(train_scenes[s], views), desc, tau);
        initials.push_back(std::move(vf.field));
        masks.push_back(std::move(vf.observed));
        refs.push_back(load_scene_gt(train_scenes[s], res));
      }
      TvL1Params params;
      params.iterations = args.tvl1_iters;
      lambda_per_res[ri] = tvl1_pick_lambda(initials, masks, refs, params);
      std::cout << "eval: tvl1 lambda at " << res << "^3 -> " << lambda_per_res[ri] << "\n";
    }
  }

  for (const SceneEntry& entry : test_scenes) {
    const std::vector<DepthView> depth = load_scene_views(entry, views);

    std::vector<FusionField<float>> net_recons;
    if (net) {
      const int drop = static_cast<int>(net->stages.size()) - 1;
      const int coarse = resolutions.front();
      // Run the pyramid starting at the coarsest requested resolution.
      set_pyramid_geometry(*net, scene_volume(coarse, ds.config.extent), net->tau_voxels);
      const auto levels =
          build_level_inputs<float>(depth, scene_volume(coarse, ds.config.extent),
                                    static_cast<int>(net->stages.size()), net->encoding,
                                    net->tau_voxels);
      PyramidRun<float> run = pyramid_forward(*net, levels);
      net_recons = std::move(run.recons);
      (void)drop;
    }

    for (std::size_t ri = 0; ri < resolutions.size(); ++ri) {
      const int res = resolutions[ri];
      const VolumeDesc desc = scene_volume(res, ds.config.extent);
      const double tau = args.truncation_voxels * desc.voxel_size;
      const FusionField<float> gt(FieldKind::TSDF, static_cast<float>(tau),
                                  load_scene_gt(entry, res));

      auto report = [&](const std::string& method, const FusionField<float>& field) {
        MetricsReport r;
        r.method = method;
        r.resolution = res;
        r.views = views;
        r.scene = entry.index;
        r.mad_mm = 1000.0 * mad(field, gt);
        r.mad_surface_mm = 1000.0 * mad_near_surface(field, gt, tau * 0.999);
        reports.push_back(r);
      };

      VolfusResult<float> vf = volfus<float>(depth, desc, tau);
      report("VolFus", vf.field);

      TvL1Params params;
      params.lambda = lambda_per_res[ri];
      params.iterations = args.tvl1_iters;
      report("TV-L1", tvl1_fuse(vf.field, vf.observed, params));

      if (net)
        for (const auto& recon : net_recons)
          if (recon.desc.resolution.x() == res) report("Ours", recon);
    }
  }

  const std::vector<std::string> methods =
      net ? std::vector<std::string>{"VolFus", "TV-L1", "Ours"}
          : std::vector<std::string>{"VolFus", "TV-L1"};
  const std::string table = metrics_table(reports, resolutions, methods);
  std::cout << table;
  if (!args.out.empty()) {
    std::filesystem::create_directories(args.out);
    std::ofstream jsonl(std::filesystem::path(args.out) / "metrics.jsonl");
    for (const auto& r : reports) jsonl << r.to_json().dump() << "\n";
    std::ofstream tab(std::filesystem::path(args.out) / "table.txt");
    tab << table;
    std::cout << "eval: wrote " << args.out << "\n";
  }
  return kExitOk;
}

// ---------------------------------------------------------------------------
// mesh
// ---------------------------------------------------------------------------

struct MeshArgs {
  std::string in;
  std::string out;
  double iso = 0.0;
};

inline int cmd_mesh(const MeshArgs& args) {
  const GridOctree<float> oct = read_grid_octree<float>(args.in);
  const TriangleMesh mesh = marching_cubes(to_dense(oct), args.iso);
  if (args.out.ends_with(".off"))
    write_off(args.out, mesh);
  else
    write_ply(args.out, mesh);
  std::cout << "mesh: " << mesh.vertices.size() << " vertices, " << mesh.triangles.size()
            << " triangles -> " << args.out << "\n";
  return kExitOk;
}

// ---------------------------------------------------------------------------
// Entry point shared by the binary and the CLI tests.
// ---------------------------------------------------------------------------

inline int run(std::vector<std::string> args) {
  CLI::App app{"octfuse: octree-based volumetric depth fusion"};
  app.require_subcommand(1);

  DatagenArgs dg;
  auto* datagen = app.add_subcommand("datagen", "generate a procedural dataset");
  datagen->add_option("--out", dg.out)->required();
  datagen->add_option("--seed", dg.seed)->required();
  datagen->add_option("--scenes", dg.scenes);
  datagen->add_option("--test-scenes", dg.test_scenes);
  datagen->add_option("--views", dg.views);
  datagen->add_option("--noise-sigma", dg.noise_sigma);
  datagen->add_option("--resolutions", dg.resolutions);
  datagen->add_option("--truncation-voxels", dg.truncation_voxels);
  datagen->add_option("--gt-views", dg.gt_views);

  FuseArgs fu;
  auto* fuse = app.add_subcommand("fuse", "fuse one scene's views into a field");
  fuse->add_option("--data", fu.data)->required();
  fuse->add_option("--scene", fu.scene);
  fuse->add_option("--fuser", fu.fuser);
  fuse->add_option("--encoding", fu.encoding);
  fuse->add_option("--resolution", fu.resolution);
  fuse->add_option("--views", fu.views);
  fuse->add_option("--tvl1-lambda", fu.tvl1_lambda);
  fuse->add_option("--tvl1-iters", fu.tvl1_iters);
  fuse->add_option("--truncation-voxels", fu.truncation_voxels);
  fuse->add_option("--checkpoint", fu.checkpoint);
  fuse->add_option("--out", fu.out);
  fuse->add_option("--mesh", fu.mesh_out);

  TrainArgs tr;
  auto* train = app.add_subcommand("train", "train the coarse-to-fine network");
  train->add_option("--data", tr.data)->required();
  train->add_option("--out", tr.out)->required();
  train->add_option("--seed", tr.seed)->required();
  train->add_option("--epochs", tr.epochs);
  train->add_option("--lr", tr.lr);
  train->add_option("--encoding", tr.encoding);
  train->add_option("--output", tr.output_kind);
  train->add_option("--truncation-voxels", tr.truncation_voxels);
  train->add_option("--width", tr.width);
  train->add_option("--views", tr.views);
  train->add_flag("--resume", tr.resume);
  train->add_option("--log", tr.log);

  EvalArgs ev;
  auto* eval = app.add_subcommand("eval", "evaluate methods over the test split");
  eval->add_option("--data", ev.data)->required();
  eval->add_option("--checkpoint", ev.checkpoint);
  eval->add_option("--encoding", ev.encoding);
  eval->add_option("--out", ev.out);
  eval->add_option("--tvl1-lambda", ev.tvl1_lambda);
  eval->add_option("--tvl1-iters", ev.tvl1_iters);
  eval->add_option("--truncation-voxels", ev.truncation_voxels);
  eval->add_option("--views", ev.views);
  eval->add_option("--resolutions", ev.resolutions);

  MeshArgs me;
  auto* mesh = app.add_subcommand("mesh", "extract the zero-levelset mesh of a field");
  mesh->add_option("--in", me.in)->required();
  mesh->add_option("--out", me.out)->required();
  mesh->add_option("--iso", me.iso);

  std::vector<const char*> argv;
  argv.push_back("octfuse");
  for (const auto& a : args) argv.push_back(a.c_str());

  try {
    app.parse(static_cast<int>(argv.size()), argv.data());
    if (*datagen) return cmd_datagen(dg);
    if (*fuse) return cmd_fuse(fu);
    if (*train) return cmd_train(tr);
    if (*eval) return cmd_eval(ev);
    if (*mesh) return cmd_mesh(me);
    return kExitConfig;
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kExitOk : kExitConfig;
  } catch (const ContractError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitConfig;
  } catch (const NumericError& e) {
    std::cerr << "numeric error: " << e.what() << "\n";
    return kExitNumeric;
  } catch (const DataError& e) {
    std::cerr << "data error: " << e.what() << "\n";
    return kExitData;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitData;
  }
}

}  // namespace ofu::cli
