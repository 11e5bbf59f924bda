#pragma once

#include <cmath>
#include <cstdint>
#include <numbers>

#include <Eigen/Core>

namespace ampflow {

/// Counter-mode SplitMix64 stream with splittable sub-streams.
///
/// Outputs are a pure function of (key, draw index), and child(i) derives a
/// sub-stream key from (key, i) alone, so any stream can be re-created
/// without replaying the draws of its parent or siblings.  This is what
/// makes per-trial results independent of worker scheduling.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : key_(seed), state_(seed) {}

  std::uint64_t next_u64() {
    state_ += kGamma;
    return mix(state_);
  }

  /// Uniform in (0, 1]; never returns 0 so log() stays finite.
  double next_uniform() {
    return static_cast<double>((next_u64() >> 11) + 1) * 0x1.0p-53;
  }

  /// Standard normal via Box-Muller; the second variate is cached.
  double next_gaussian() {
    if (has_spare_) {
      has_spare_ = false;
      return spare_;
    }
    const double u1 = next_uniform();
    const double u2 = next_uniform();
    const double r = std::sqrt(-2.0 * std::log(u1));
    const double a = 2.0 * std::numbers::pi * u2;
    spare_ = r * std::sin(a);
    has_spare_ = true;
    return r * std::cos(a);
  }

  /// Sub-stream addressed by (this stream's key, index); independent of how
  /// many draws this stream has produced.
  Rng child(std::uint64_t index) const {
    return Rng(mix(key_ + kChildGamma * (index + 1)));
  }

  std::uint64_t key() const { return key_; }

 private:
  static constexpr std::uint64_t kGamma = 0x9E3779B97F4A7C15ULL;
  static constexpr std::uint64_t kChildGamma = 0xD1B54A32D192ED03ULL;

  static std::uint64_t mix(std::uint64_t z) {
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
    return z ^ (z >> 31);
  }

  std::uint64_t key_;
  std::uint64_t state_;
  double spare_ = 0.0;
  bool has_spare_ = false;
};

inline Eigen::VectorXd gaussian_vector(Rng& rng, Eigen::Index n) {
  Eigen::VectorXd v(n);
  for (Eigen::Index i = 0; i < n; ++i) v[i] = rng.next_gaussian();
  return v;
}

/// Uniform draw from the unit sphere (normalized Gaussian).
inline Eigen::VectorXd unit_sphere_vector(Rng& rng, Eigen::Index n) {
  Eigen::VectorXd v = gaussian_vector(rng, n);
  double norm = v.norm();
  while (norm < 1e-150) {
    v = gaussian_vector(rng, n);
    norm = v.norm();
  }
  return v / norm;
}

}  // namespace ampflow
