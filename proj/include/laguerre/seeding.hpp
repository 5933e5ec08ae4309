#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "laguerre/transport.hpp"

namespace laguerre {

/// xoshiro256** seeded through splitmix64. Bit-exact across platforms,
/// unlike the standard library distributions.
class Rng {
 public:
  using result_type = std::uint64_t;

  explicit Rng(std::uint64_t seed = 0);

  static constexpr result_type min() { return 0; }
  static constexpr result_type max() { return ~result_type{0}; }
  result_type operator()();

  /// Uniform on [0, 1) with 53 random bits.
  double uniform();
  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }
  /// Standard normal by Box-Muller.
  double normal();
  /// Uniform integer in [0, n).
  std::uint64_t below(std::uint64_t n);

 private:
  std::uint64_t s_[4];
};

struct Interval {
  double lower = 0.0;
  double upper = 0.0;
};

struct Ball {
  std::vector<double> centre;
  double radius = 0.0;
};

/// Where the seeds of one size class may go.
struct ClassRegion {
  /// Slabs along SpatialSpec::band_axis, absolute coordinates.
  std::vector<Interval> bands;
  std::vector<Ball> discs;
  /// Mixed kind: share of the class placed uniformly over the domain.
  double random_fraction = 0.0;
};

enum class SpatialKind { kUniform, kBanded, kClustered, kGradient, kMixed, kExplicit };

const char* to_string(SpatialKind kind);
SpatialKind spatial_kind_from_string(const std::string& name);

struct SpatialSpec {
  SpatialKind kind = SpatialKind::kUniform;
  std::uint64_t rng_seed = 0;
  int band_axis = 0;
  /// Indexed by size class.
  std::vector<ClassRegion> regions;
  int gradient_axis = 0;
  /// Gradient kind: larger grains towards the middle instead of towards
  /// the upper end of the axis.
  bool gradient_centred = false;
  std::vector<std::vector<double>> positions;
};

/// Bands of alternating classes along `axis` with the given volume
/// fractions; each class gets `repeats` bands of equal width.
std::vector<ClassRegion> alternating_bands(double lower, double upper,
                                           std::span<const double> fractions, int repeats);

/// Class 0 in one centred band of the given fraction, class 1 on both sides.
std::vector<ClassRegion> centred_band(double lower, double upper, double fraction);

/// Seed positions for the given per-seed class labels (empty = all class 0)
/// and target sizes (used by the gradient kind). Throws InfeasibleSpec.
template <int D>
std::vector<Vec<D>> sample_positions(const Domain<D>& domain, std::size_t n,
                                     const SpatialSpec& spec, std::span<const int> classes = {},
                                     std::span<const double> sizes = {});

enum class VolumeKind { kExplicit, kBimodal, kLognormal, kUniformRatio };

const char* to_string(VolumeKind kind);
VolumeKind volume_kind_from_string(const std::string& name);

struct VolumeSpec {
  VolumeKind kind = VolumeKind::kBimodal;
  /// Explicit volumes.
  std::vector<double> values;
  /// Bimodal: n1 grains of size x and n2 of size ratio * x.
  int n1 = 0;
  int n2 = 0;
  double ratio = 1.0;
  /// Log-normal radii and uniform-ratio sizes.
  int n = 0;
  double mean = 1.0;
  double sd = 0.35;
  double max_ratio = 100.0;
};

struct TargetDraw {
  TargetSpec targets;
  /// Size class per grain (bimodal: 0 small, 1 large; otherwise 0).
  std::vector<int> classes;
};

/// Targets normalised to `domain_volume`; d selects m ~ r^d for log-normal.
TargetDraw make_targets(double domain_volume, int d, const VolumeSpec& spec, Rng& rng);

/// Coefficient of variation (sample standard deviation over mean).
double coefficient_of_variation(std::span<const double> values);

}  // namespace laguerre
