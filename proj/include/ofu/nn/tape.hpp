#pragma once

#include "ofu/nn/layers.hpp"

namespace ofu {

enum class OpKind : int {
  Input = 0,
  Conv3 = 1,     // includes ReLU? no: plain conv; ReLU is its own node
  Relu = 2,
  Pool = 3,
  UnpoolTo = 4,  // nearest-neighbor upsample onto node b's structure
  Concat = 5,
  Conv1x1 = 6,
  Scale = 7,     // out = scalar * in
  ClampSym = 8,  // out = clamp(in, -scalar, scalar)
  Sigmoid = 9,
};

/// Records the operations and activations of one forward pass, enough for
/// exact reverse-mode differentiation and for bitwise replay.
template <class T>
struct Tape {
  struct Node {
    OpKind kind;
    int a = -1;
    int b = -1;       // second input (Concat) or structure reference (UnpoolTo)
    int param = -1;   // index into params for Conv3/Conv1x1
    T scalar = T(0);  // Scale factor / clamp bound
    GridOctree<T> out;
  };

  std::vector<Node> nodes;
  std::vector<ConvParams<T>*> params;

  int add_param(ConvParams<T>* p) {
    for (std::size_t i = 0; i < params.size(); ++i)
      if (params[i] == p) return static_cast<int>(i);
    params.push_back(p);
    return static_cast<int>(params.size() - 1);
  }

  const GridOctree<T>& value(int node) const { return nodes[node].out; }

  int input(GridOctree<T> x) {
    nodes.push_back({OpKind::Input, -1, -1, -1, T(0), std::move(x)});
    return static_cast<int>(nodes.size() - 1);
  }
  int conv3(int x, ConvParams<T>* p) {
    const int pi = add_param(p);
    nodes.push_back({OpKind::Conv3, x, -1, pi, T(0), oct_conv3(nodes[x].out, *p)});
    return static_cast<int>(nodes.size() - 1);
  }
  int relu(int x) {
    nodes.push_back({OpKind::Relu, x, -1, -1, T(0), oct_relu(nodes[x].out)});
    return static_cast<int>(nodes.size() - 1);
  }
  int pool(int x) {
    nodes.push_back({OpKind::Pool, x, -1, -1, T(0), oct_pool(nodes[x].out)});
    return static_cast<int>(nodes.size() - 1);
  }
  int unpool_to(int x, int structure_of) {
    nodes.push_back({OpKind::UnpoolTo, x, structure_of, -1, T(0),
                     oct_unpool_to(nodes[x].out, nodes[structure_of].out)});
    return static_cast<int>(nodes.size() - 1);
  }
  int concat(int x, int y) {
    nodes.push_back({OpKind::Concat, x, y, -1, T(0), oct_concat(nodes[x].out, nodes[y].out)});
    return static_cast<int>(nodes.size() - 1);
  }
  int conv1x1_node(int x, ConvParams<T>* p) {
    const int pi = add_param(p);
    nodes.push_back({OpKind::Conv1x1, x, -1, pi, T(0), conv1x1(nodes[x].out, *p)});
    return static_cast<int>(nodes.size() - 1);
  }
  int scale(int x, T s) {
    GridOctree<T> out = nodes[x].out;
    for (T& v : out.features) v *= s;
    nodes.push_back({OpKind::Scale, x, -1, -1, s, std::move(out)});
    return static_cast<int>(nodes.size() - 1);
  }
  int clamp_sym(int x, T bound) {
    GridOctree<T> out = nodes[x].out;
    for (T& v : out.features) v = std::clamp(v, -bound, bound);
    nodes.push_back({OpKind::ClampSym, x, -1, -1, bound, std::move(out)});
    return static_cast<int>(nodes.size() - 1);
  }
  int sigmoid(int x) {
    GridOctree<T> out = nodes[x].out;
    for (T& v : out.features) v = T(1) / (T(1) + std::exp(-v));
    nodes.push_back({OpKind::Sigmoid, x, -1, -1, T(0), std::move(out)});
    return static_cast<int>(nodes.size() - 1);
  }

  /// Recomputes every node from its recorded inputs and checks bitwise
  /// equality with the recorded activations.
  bool replay_verify() const {
    for (const Node& node : nodes) {
      GridOctree<T> redo;
      switch (node.kind) {
        case OpKind::Input:
          continue;
        case OpKind::Conv3:
          redo = oct_conv3(nodes[node.a].out, *params[node.param]);
          break;
        case OpKind::Relu:
          redo = oct_relu(nodes[node.a].out);
          break;
        case OpKind::Pool:
          redo = oct_pool(nodes[node.a].out);
          break;
        case OpKind::UnpoolTo:
          redo = oct_unpool_to(nodes[node.a].out, nodes[node.b].out);
          break;
        case OpKind::Concat:
          redo = oct_concat(nodes[node.a].out, nodes[node.b].out);
          break;
        case OpKind::Conv1x1:
          redo = conv1x1(nodes[node.a].out, *params[node.param]);
          break;
        case OpKind::Scale:
          redo = node.out;  // recompute below from input
          redo.features = nodes[node.a].out.features;
          for (T& v : redo.features) v *= node.scalar;
          break;
        case OpKind::ClampSym:
          redo = node.out;
          redo.features = nodes[node.a].out.features;
          for (T& v : redo.features) v = std::clamp(v, -node.scalar, node.scalar);
          break;
        case OpKind::Sigmoid:
          redo = node.out;
          redo.features = nodes[node.a].out.features;
          for (T& v : redo.features) v = T(1) / (T(1) + std::exp(-v));
          break;
      }
      if (redo.features != node.out.features || !(redo.same_structure(node.out))) return false;
    }
    return true;
  }
};

/// Reverse-mode sweep. Seeds the given node with dLoss/dnode (aligned with
/// its feature store) and returns one gradient per tape parameter.
template <class T>
std::vector<ConvGrads<T>> backward(Tape<T>& tape, int loss_node,
                                   const std::vector<T>& loss_grad) {
  OFU_REQUIRE(loss_node >= 0 && loss_node < static_cast<int>(tape.nodes.size()),
              "backward: node out of range");
  OFU_REQUIRE(loss_grad.size() == tape.nodes[loss_node].out.features.size(),
              "backward: seed gradient size mismatch");

  std::vector<ConvGrads<T>> param_grads;
  param_grads.reserve(tape.params.size());
  for (const ConvParams<T>* p : tape.params) param_grads.push_back(ConvGrads<T>::zeros_like(*p));

  std::vector<std::vector<T>> grads(tape.nodes.size());
  grads[loss_node] = loss_grad;

  auto accumulate = [&](int node, std::vector<T>&& g) {
    if (grads[node].empty()) {
      grads[node] = std::move(g);
      return;
    }
    auto& dst = grads[node];
    parallel_for(static_cast<std::int64_t>(dst.size()),
                 [&](std::int64_t i) { dst[i] += g[i]; });
  };

  for (int i = loss_node; i >= 0; --i) {
    if (grads[i].empty()) continue;
    const auto& node = tape.nodes[i];
    const std::vector<T>& g = grads[i];
    switch (node.kind) {
      case OpKind::Input:
        break;
      case OpKind::Conv3: {
        const GridOctree<T>& x = tape.nodes[node.a].out;
        ConvParams<T>& p = *tape.params[node.param];
        param_grads[node.param].add(oct_conv3_backward_params(x, p, g));
        accumulate(node.a, std::move(oct_conv3_backward_input(x, p, g).features));
        break;
      }
      case OpKind::Relu:
        accumulate(node.a, oct_relu_backward(node.out, g));
        break;
      case OpKind::Pool:
        accumulate(node.a, oct_pool_backward(tape.nodes[node.a].out, node.out, g));
        break;
      case OpKind::UnpoolTo:
        accumulate(node.a, oct_unpool_to_backward(tape.nodes[node.a].out, node.out, g));
        break;
      case OpKind::Concat: {
        const GridOctree<T>& a = tape.nodes[node.a].out;
        const GridOctree<T>& b = tape.nodes[node.b].out;
        auto [ga, gb] = oct_concat_backward(a.channels, b.channels, a.total_leaves(), g);
        accumulate(node.a, std::move(ga));
        accumulate(node.b, std::move(gb));
        break;
      }
      case OpKind::Conv1x1: {
        const GridOctree<T>& x = tape.nodes[node.a].out;
        ConvParams<T>& p = *tape.params[node.param];
        param_grads[node.param].add(conv1x1_backward_params(x, p, g));
        accumulate(node.a, std::move(conv1x1_backward_input(x, p, g).features));
        break;
      }
      case OpKind::Scale: {
        std::vector<T> gi(g.size());
        parallel_for(static_cast<std::int64_t>(g.size()),
                     [&](std::int64_t k) { gi[k] = g[k] * node.scalar; });
        accumulate(node.a, std::move(gi));
        break;
      }
      case OpKind::ClampSym: {
        const auto& pre = tape.nodes[node.a].out.features;
        std::vector<T> gi(g.size());
        parallel_for(static_cast<std::int64_t>(g.size()), [&](std::int64_t k) {
          gi[k] = std::abs(pre[k]) < node.scalar ? g[k] : T(0);
        });
        accumulate(node.a, std::move(gi));
        break;
      }
      case OpKind::Sigmoid: {
        const auto& out = node.out.features;
        std::vector<T> gi(g.size());
        parallel_for(static_cast<std::int64_t>(g.size()), [&](std::int64_t k) {
          gi[k] = g[k] * out[k] * (T(1) - out[k]);
        });
        accumulate(node.a, std::move(gi));
        break;
      }
    }
    grads[i].clear();
  }
  return param_grads;
}

}  // namespace ofu
