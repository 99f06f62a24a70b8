#pragma once

#include "ofu/depth_io.hpp"
#include "ofu/nn/adam.hpp"
#include "ofu/nn/network.hpp"

namespace ofu {

// ---------------------------------------------------------------------------
// Checkpoint file, little-endian binary:
//   magic "OFN1", u32 stage count,
//   per stage: u32 level, u32 layer count, then per layer u32 kind, in, out,
//   then all f32 weights in declaration order
//   (per stage: conv1.w, conv1.b, ..., conv5.w, conv5.b, head.w, head.b).
// Layer kinds: 0 conv3+relu, 1 pool, 2 unpool+skip-concat, 3 linear head,
// 4 sigmoid head. Unpool entries record (channels in, channels after concat).
// ---------------------------------------------------------------------------

namespace ckpt_detail {

enum LayerKind : std::uint32_t {
  kConv3Relu = 0,
  kPool = 1,
  kUnpoolConcat = 2,
  kHeadLinear = 3,
  kHeadSigmoid = 4,
};

struct LayerEntry {
  std::uint32_t kind, in, out;
};

template <class T>
std::vector<LayerEntry> stage_table(const StageNetwork<T>& s) {
  const auto c = [&](const ConvParams<T>& p) {
    return LayerEntry{kConv3Relu, static_cast<std::uint32_t>(p.in_channels),
                      static_cast<std::uint32_t>(p.out_channels)};
  };
  const std::uint32_t head_kind =
      s.output_kind == FieldKind::TSDF ? kHeadLinear : kHeadSigmoid;
  return {
      c(s.conv1),
      {kPool, static_cast<std::uint32_t>(s.conv1.out_channels),
       static_cast<std::uint32_t>(s.conv1.out_channels)},
      c(s.conv2),
      {kPool, static_cast<std::uint32_t>(s.conv2.out_channels),
       static_cast<std::uint32_t>(s.conv2.out_channels)},
      c(s.conv3),
      {kUnpoolConcat, static_cast<std::uint32_t>(s.conv3.out_channels),
       static_cast<std::uint32_t>(s.conv4.in_channels)},
      c(s.conv4),
      {kUnpoolConcat, static_cast<std::uint32_t>(s.conv4.out_channels),
       static_cast<std::uint32_t>(s.conv5.in_channels)},
      c(s.conv5),
      {head_kind, static_cast<std::uint32_t>(s.head.in_channels), 1},
  };
}

}  // namespace ckpt_detail

template <class T>
void write_checkpoint(const std::filesystem::path& path, const PyramidNetwork<T>& net) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw DataError("cannot open for writing: " + path.string());
  os.write("OFN1", 4);
  io_detail::write_pod(os, static_cast<std::uint32_t>(net.stages.size()));
  for (const auto& stage : net.stages) {
    io_detail::write_pod(os, static_cast<std::uint32_t>(stage.level));
    const auto table = ckpt_detail::stage_table(stage);
    io_detail::write_pod(os, static_cast<std::uint32_t>(table.size()));
    for (const auto& e : table) {
      io_detail::write_pod(os, e.kind);
      io_detail::write_pod(os, e.in);
      io_detail::write_pod(os, e.out);
    }
  }
  for (const auto& stage : net.stages)
    for (const ConvParams<T>* p : stage.parameters()) {
      for (const T& w : p->weights) io_detail::write_pod(os, static_cast<float>(w));
      for (const T& b : p->bias) io_detail::write_pod(os, static_cast<float>(b));
    }
  if (!os) throw DataError("write failed: " + path.string());
}

template <class T = float>
PyramidNetwork<T> read_checkpoint(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw DataError("cannot open: " + path.string());
  char magic[4];
  is.read(magic, 4);
  if (!is || std::memcmp(magic, "OFN1", 4) != 0)
    throw DataError("not an OFN1 checkpoint: " + path.string());

  PyramidNetwork<T> net;
  const auto stage_count = io_detail::read_pod<std::uint32_t>(is);
  if (stage_count == 0 || stage_count > 16) throw DataError("OFN1: bad stage count");
  for (std::uint32_t s = 0; s < stage_count; ++s) {
    const auto level = io_detail::read_pod<std::uint32_t>(is);
    const auto layer_count = io_detail::read_pod<std::uint32_t>(is);
    if (layer_count != 10) throw DataError("OFN1: unexpected layer table size");
    std::vector<ckpt_detail::LayerEntry> table(layer_count);
    for (auto& e : table) {
      e.kind = io_detail::read_pod<std::uint32_t>(is);
      e.in = io_detail::read_pod<std::uint32_t>(is);
      e.out = io_detail::read_pod<std::uint32_t>(is);
    }
    const bool tsdf_head = table[9].kind == ckpt_detail::kHeadLinear;
    if (!tsdf_head && table[9].kind != ckpt_detail::kHeadSigmoid)
      throw DataError("OFN1: unknown head kind");
    StageNetwork<T> stage = StageNetwork<T>::make(
        static_cast<int>(level), static_cast<int>(table[0].in),
        tsdf_head ? FieldKind::TSDF : FieldKind::Occupancy, static_cast<int>(table[0].out));
    const auto expect = ckpt_detail::stage_table(stage);
    for (std::size_t i = 0; i < expect.size(); ++i)
      if (expect[i].kind != table[i].kind || expect[i].in != table[i].in ||
          expect[i].out != table[i].out)
        throw DataError("OFN1: layer table does not describe a pyramid stage");
    net.stages.push_back(std::move(stage));
  }
  net.output_kind = net.stages.front().output_kind;
  net.width = net.stages.front().width;
  for (auto& stage : net.stages)
    for (ConvParams<T>* p : stage.parameters()) {
      for (T& w : p->weights) w = static_cast<T>(io_detail::read_pod<float>(is));
      for (T& b : p->bias) b = static_cast<T>(io_detail::read_pod<float>(is));
    }
  return net;
}

/// Fills tau_per_level for a checkpoint loaded without geometry context.
template <class T>
void set_pyramid_geometry(PyramidNetwork<T>& net, const VolumeDesc& coarsest,
                          int tau_voxels = 4) {
  net.tau_voxels = tau_voxels;
  net.tau_per_level.clear();
  VolumeDesc desc = coarsest;
  for (std::size_t l = 0; l < net.stages.size(); ++l) {
    net.tau_per_level.push_back(static_cast<T>(tau_voxels * desc.voxel_size));
    desc = desc.finer();
  }
}

// ---------------------------------------------------------------------------
// Optimizer/progress sidecar for resumable training ("OFS1"): the stage being
// trained, the next epoch to run, and the Adam state of that stage's tensors.
// ---------------------------------------------------------------------------

template <class T>
struct TrainState {
  int stage = 0;
  int next_epoch = 0;
  AdamState<T> adam;
};

template <class T>
void write_train_state(const std::filesystem::path& path, const TrainState<T>& st) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw DataError("cannot open for writing: " + path.string());
  os.write("OFS1", 4);
  io_detail::write_pod(os, static_cast<std::uint32_t>(st.stage));
  io_detail::write_pod(os, static_cast<std::uint32_t>(st.next_epoch));
  io_detail::write_pod(os, static_cast<std::uint64_t>(st.adam.step));
  io_detail::write_pod(os, static_cast<std::uint32_t>(st.adam.m.size()));
  for (std::size_t i = 0; i < st.adam.m.size(); ++i) {
    io_detail::write_pod(os, static_cast<std::uint64_t>(st.adam.m[i].size()));
    for (double v : st.adam.m[i]) io_detail::write_pod(os, v);
    for (double v : st.adam.v[i]) io_detail::write_pod(os, v);
  }
  if (!os) throw DataError("write failed: " + path.string());
}

template <class T = float>
TrainState<T> read_train_state(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw DataError("cannot open: " + path.string());
  char magic[4];
  is.read(magic, 4);
  if (!is || std::memcmp(magic, "OFS1", 4) != 0)
    throw DataError("not an OFS1 state file: " + path.string());
  TrainState<T> st;
  st.stage = static_cast<int>(io_detail::read_pod<std::uint32_t>(is));
  st.next_epoch = static_cast<int>(io_detail::read_pod<std::uint32_t>(is));
  st.adam.step = static_cast<long>(io_detail::read_pod<std::uint64_t>(is));
  const auto tensors = io_detail::read_pod<std::uint32_t>(is);
  st.adam.m.resize(tensors);
  st.adam.v.resize(tensors);
  for (std::uint32_t i = 0; i < tensors; ++i) {
    const auto size = io_detail::read_pod<std::uint64_t>(is);
    st.adam.m[i].resize(size);
    st.adam.v[i].resize(size);
    for (double& v : st.adam.m[i]) v = io_detail::read_pod<double>(is);
    for (double& v : st.adam.v[i]) v = io_detail::read_pod<double>(is);
  }
  return st;
}

}  // namespace ofu
