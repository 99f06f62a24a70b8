#pragma once

#include "ofu/fusion.hpp"

#include <functional>

namespace ofu {

/// First-order primal-dual parameters for TV-L1 fusion. The default steps
/// satisfy the stability bound step_p * step_d * L^2 <= 1 with L^2 = 12 for
/// the 3D forward-difference gradient.
struct TvL1Params {
  double lambda = 0.4;
  int iterations = 700;
  double primal_step = 1.0 / std::sqrt(12.0);
  double dual_step = 1.0 / std::sqrt(12.0);

  void check() const {
    OFU_REQUIRE(iterations >= 1, "TvL1Params: iterations must be >= 1");
    OFU_REQUIRE(primal_step > 0 && dual_step > 0, "TvL1Params: steps must be positive");
    OFU_REQUIRE(primal_step * dual_step * 12.0 <= 1.0 + 1e-12,
                "TvL1Params: step_p * step_d * 12 must be <= 1");
  }
};

namespace tvl1_detail {

/// Forward differences with Neumann boundary (zero beyond the last sample).
template <class T>
inline void gradient_at(const DenseVolume<T>& u, int i, int j, int k, double g[3]) {
  const Vec3i r = u.desc.resolution;
  const double c = u.at(0, i, j, k);
  g[0] = i + 1 < r.x() ? u.at(0, i + 1, j, k) - c : 0.0;
  g[1] = j + 1 < r.y() ? u.at(0, i, j + 1, k) - c : 0.0;
  g[2] = k + 1 < r.z() ? u.at(0, i, j, k + 1) - c : 0.0;
}

/// Negative adjoint of gradient_at: <grad u, p> = -<u, div p> exactly.
template <class T>
inline double divergence_at(const DenseVolume<T>& p, int i, int j, int k) {
  const Vec3i r = p.desc.resolution;
  double div = 0.0;
  if (i > 0) div += p.at(0, p.desc.linear_index(i - 1, j, k));
  if (i + 1 < r.x()) div -= p.at(0, p.desc.linear_index(i, j, k));
  if (j > 0) div += p.at(1, p.desc.linear_index(i, j - 1, k));
  if (j + 1 < r.y()) div -= p.at(1, p.desc.linear_index(i, j, k));
  if (k > 0) div += p.at(2, p.desc.linear_index(i, j, k - 1));
  if (k + 1 < r.z()) div -= p.at(2, p.desc.linear_index(i, j, k));
  return -div;
}

}  // namespace tvl1_detail

/// TV energy plus L1 data term over observed voxels, summed in double.
/// Used both by the optimizer's monitoring hooks and as an independent oracle.
template <class T>
double tvl1_energy(const DenseVolume<T>& u, const DenseVolume<T>& f,
                   const DenseVolume<std::uint8_t>& observed, double lambda) {
  const Vec3i r = u.desc.resolution;
  double energy = 0.0;
  for (int i = 0; i < r.x(); ++i)
    for (int j = 0; j < r.y(); ++j)
      for (int k = 0; k < r.z(); ++k) {
        double g[3];
        tvl1_detail::gradient_at(u, i, j, k, g);
        energy += std::sqrt(g[0] * g[0] + g[1] * g[1] + g[2] * g[2]);
        if (observed.at(0, i, j, k))
          energy += lambda * std::abs(static_cast<double>(u.at(0, i, j, k)) - f.at(0, i, j, k));
      }
  return energy;
}

/// Minimizes  sum_v |grad u(v)| + lambda * sum_{v observed} |u(v) - f(v)|
/// with a first-order primal-dual scheme for exactly params.iterations
/// iterations. Unobserved voxels evolve under the TV term only. The output
/// is clamped to the field's truncation range.
///
/// monitor, when set, is invoked every monitor_interval iterations (and at
/// the final one) with the current primal energy.
template <class T>
FusionField<T> tvl1_fuse(const FusionField<T>& initial, const DenseVolume<std::uint8_t>& observed,
                         const TvL1Params& params,
                         const std::function<void(int, double)>& monitor = nullptr,
                         int monitor_interval = 50) {
  params.check();
  OFU_REQUIRE(initial.kind == FieldKind::TSDF, "tvl1_fuse: expected a TSDF field");
  const DenseVolume<T> f = initial.as_dense();
  OFU_REQUIRE(observed.desc == f.desc, "tvl1_fuse: mask/field shape mismatch");

  const Vec3i r = f.desc.resolution;
  const std::int64_t n = f.voxel_count();
  const double sigma = params.dual_step;
  const double tau_step = params.primal_step;
  const double shrink = tau_step * params.lambda;

  DenseVolume<T> u = f;
  DenseVolume<T> u_bar = f;
  DenseVolume<T> u_prev = f;
  DenseVolume<T> p(f.desc, 3);

  for (int iter = 0; iter < params.iterations; ++iter) {
    // Dual ascent on the TV term with projection onto the unit ball.
    parallel_for(n, [&](std::int64_t v) {
      const int i = static_cast<int>(v / (r.y() * r.z()));
      const int j = static_cast<int>((v / r.z()) % r.y());
      const int k = static_cast<int>(v % r.z());
      double g[3];
      tvl1_detail::gradient_at(u_bar, i, j, k, g);
      double q[3];
      for (int d = 0; d < 3; ++d) q[d] = p.at(d, v) + sigma * g[d];
      const double norm = std::sqrt(q[0] * q[0] + q[1] * q[1] + q[2] * q[2]);
      const double scale = norm > 1.0 ? 1.0 / norm : 1.0;
      for (int d = 0; d < 3; ++d) p.at(d, v) = static_cast<T>(q[d] * scale);
    });

    // Primal descent with the L1 data proximal step on observed voxels.
    std::swap(u_prev.data, u.data);
    parallel_for(n, [&](std::int64_t v) {
      const int i = static_cast<int>(v / (r.y() * r.z()));
      const int j = static_cast<int>((v / r.z()) % r.y());
      const int k = static_cast<int>(v % r.z());
      double val = u_prev.at(0, v) + tau_step * tvl1_detail::divergence_at(p, i, j, k);
      if (observed.at(0, v)) {
        const double resid = val - f.at(0, v);
        val -= std::clamp(resid, -shrink, shrink);
      }
      u.at(0, v) = static_cast<T>(val);
    });

    // Over-relaxation.
    parallel_for(n, [&](std::int64_t v) {
      u_bar.at(0, v) = static_cast<T>(2.0 * u.at(0, v) - u_prev.at(0, v));
    });

    if (monitor && ((iter + 1) % monitor_interval == 0 || iter + 1 == params.iterations))
      monitor(iter + 1, tvl1_energy(u, f, observed, params.lambda));
  }

  const T tau_field = initial.truncation;
  parallel_for(n, [&](std::int64_t v) {
    u.at(0, v) = std::clamp(u.at(0, v), -tau_field, tau_field);
  });
  return FusionField<T>(FieldKind::TSDF, tau_field, std::move(u));
}

/// 5-point log grid search for the data weight: returns the lambda whose
/// fused result has the smallest mean absolute distance to the reference
/// fields over the given samples.
template <class T>
double tvl1_pick_lambda(const std::vector<FusionField<T>>& initials,
                        const std::vector<DenseVolume<std::uint8_t>>& masks,
                        const std::vector<DenseVolume<T>>& references, TvL1Params params,
                        const std::vector<double>& grid = {0.04, 0.13, 0.4, 1.3, 4.0}) {
  OFU_REQUIRE(initials.size() == masks.size() && initials.size() == references.size(),
              "tvl1_pick_lambda: sample count mismatch");
  double best_lambda = grid.front();
  double best_mad = std::numeric_limits<double>::infinity();
  for (const double lambda : grid) {
    params.lambda = lambda;
    double mad_sum = 0.0;
    for (std::size_t s = 0; s < initials.size(); ++s) {
      const DenseVolume<T> fused = tvl1_fuse(initials[s], masks[s], params).as_dense();
      double acc = 0.0;
      for (std::int64_t v = 0; v < fused.voxel_count(); ++v)
        acc += std::abs(static_cast<double>(fused.at(0, v)) - references[s].at(0, v));
      mad_sum += acc / fused.voxel_count();
    }
    if (mad_sum < best_mad) {
      best_mad = mad_sum;
      best_lambda = lambda;
    }
  }
  return best_lambda;
}

}  // namespace ofu
