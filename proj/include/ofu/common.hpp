#pragma once

#include <Eigen/Dense>

#include <cstdint>
#include <cmath>
#include <stdexcept>
#include <string>
#include <vector>

#ifdef _OPENMP
#include <omp.h>
#endif

namespace ofu {

using Vec3d = Eigen::Vector3d;
using Vec3f = Eigen::Vector3f;
using Vec3i = Eigen::Vector3i;
using Mat3d = Eigen::Matrix3d;

/// Thrown when inputs violate an operation's contract (shape or argument errors).
struct ContractError : std::invalid_argument {
  using std::invalid_argument::invalid_argument;
};

/// Thrown when data on disk is malformed or missing.
struct DataError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

/// Thrown when an optimization produces non-finite values.
struct NumericError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

#define OFU_REQUIRE(cond, msg) \
  do {                         \
    if (!(cond)) throw ::ofu::ContractError(msg); \
  } while (0)

// ---------------------------------------------------------------------------
// Deterministic RNG. splitmix64 streams plus a Box-Muller gaussian so that
// results do not depend on the standard library's distribution internals.
// ---------------------------------------------------------------------------

struct Rng {
  explicit Rng(std::uint64_t seed) : state_(seed) {}

  std::uint64_t next_u64() {
    std::uint64_t z = (state_ += 0x9e3779b97f4a7c15ull);
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
    return z ^ (z >> 31);
  }

  /// Uniform in [0, 1).
  double uniform() {
    return static_cast<double>(next_u64() >> 11) * 0x1.0p-53;
  }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  int uniform_int(int lo, int hi_inclusive) {
    const auto span = static_cast<std::uint64_t>(hi_inclusive - lo) + 1;
    return lo + static_cast<int>(next_u64() % span);
  }

  /// Standard normal via Box-Muller; caches the second draw.
  double normal() {
    if (has_cached_) {
      has_cached_ = false;
      return cached_;
    }
    double u1 = 0.0;
    do {
      u1 = uniform();
    } while (u1 <= 0.0);
    const double u2 = uniform();
    const double r = std::sqrt(-2.0 * std::log(u1));
    const double a = 2.0 * M_PI * u2;
    cached_ = r * std::sin(a);
    has_cached_ = true;
    return r * std::cos(a);
  }

 private:
  std::uint64_t state_ = 0;
  double cached_ = 0.0;
  bool has_cached_ = false;
};

/// Derives an independent stream from (seed, salt) pairs.
inline std::uint64_t mix_seed(std::uint64_t seed, std::uint64_t salt) {
  Rng r(seed ^ (0x632be59bd9b4e019ull + salt * 0x9e3779b97f4a7c15ull));
  return r.next_u64();
}

// ---------------------------------------------------------------------------
// Parallel helpers. Work is split into chunks with a fixed chunk count so that
// reductions merged in chunk order are bit-identical regardless of thread
// count.
// ---------------------------------------------------------------------------

template <class Fn>
void parallel_for(std::int64_t n, Fn&& fn) {
#ifdef _OPENMP
#pragma omp parallel for schedule(static)
#endif
  for (std::int64_t i = 0; i < n; ++i) fn(i);
}

/// Runs fn(chunk_index, begin, end) over a fixed partition of [0, n).
/// Chunk results may be combined sequentially by chunk index afterwards.
template <class Fn>
void parallel_chunks(std::int64_t n, int num_chunks, Fn&& fn) {
  if (n <= 0) return;
  const std::int64_t chunk = (n + num_chunks - 1) / num_chunks;
#ifdef _OPENMP
#pragma omp parallel for schedule(dynamic, 1)
#endif
  for (int c = 0; c < num_chunks; ++c) {
    const std::int64_t lo = static_cast<std::int64_t>(c) * chunk;
    if (lo >= n) continue;
    const std::int64_t hi = std::min(n, lo + chunk);
    fn(c, lo, hi);
  }
}

inline constexpr int kReduceChunks = 64;

}  // namespace ofu
