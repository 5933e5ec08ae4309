#include "laguerre/seeding.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <numeric>
#include <sstream>
#include <unordered_map>

namespace laguerre {

namespace {

std::uint64_t splitmix64(std::uint64_t& x) {
  std::uint64_t z = (x += 0x9e3779b97f4a7c15ULL);
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

std::uint64_t rotl(std::uint64_t x, int k) { return (x << k) | (x >> (64 - k)); }

}  // namespace

Rng::Rng(std::uint64_t seed) {
  for (auto& s : s_) s = splitmix64(seed);
}

Rng::result_type Rng::operator()() {
  const std::uint64_t result = rotl(s_[1] * 5, 7) * 9;
  const std::uint64_t t = s_[1] << 17;
  s_[2] ^= s_[0];
  s_[3] ^= s_[1];
  s_[1] ^= s_[2];
  s_[0] ^= s_[3];
  s_[2] ^= t;
  s_[3] = rotl(s_[3], 45);
  return result;
}

double Rng::uniform() { return static_cast<double>((*this)() >> 11) * 0x1.0p-53; }

double Rng::normal() {
  double u1 = uniform();
  while (u1 <= 0.0) u1 = uniform();
  const double u2 = uniform();
  return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * std::numbers::pi * u2);
}

std::uint64_t Rng::below(std::uint64_t n) {
  // Rejection keeps the draw unbiased.
  const std::uint64_t limit = max() - max() % n;
  std::uint64_t x;
  do x = (*this)();
  while (x >= limit);
  return x % n;
}

const char* to_string(SpatialKind kind) {
  switch (kind) {
    case SpatialKind::kUniform: return "uniform";
    case SpatialKind::kBanded: return "banded";
    case SpatialKind::kClustered: return "clustered";
    case SpatialKind::kGradient: return "gradient";
    case SpatialKind::kMixed: return "mixed";
    case SpatialKind::kExplicit: return "explicit";
  }
  return "?";
}

SpatialKind spatial_kind_from_string(const std::string& name) {
  for (auto k : {SpatialKind::kUniform, SpatialKind::kBanded, SpatialKind::kClustered,
                 SpatialKind::kGradient, SpatialKind::kMixed, SpatialKind::kExplicit})
    if (name == to_string(k)) return k;
  throw ConfigError("unknown spatial kind '" + name + "'");
}

const char* to_string(VolumeKind kind) {
  switch (kind) {
    case VolumeKind::kExplicit: return "explicit";
    case VolumeKind::kBimodal: return "bimodal";
    case VolumeKind::kLognormal: return "lognormal";
    case VolumeKind::kUniformRatio: return "uniform-ratio";
  }
  return "?";
}

VolumeKind volume_kind_from_string(const std::string& name) {
  for (auto k : {VolumeKind::kExplicit, VolumeKind::kBimodal, VolumeKind::kLognormal,
                 VolumeKind::kUniformRatio})
    if (name == to_string(k)) return k;
  throw ConfigError("unknown volume kind '" + name + "'");
}

std::vector<ClassRegion> alternating_bands(double lower, double upper,
                                           std::span<const double> fractions, int repeats) {
  if (fractions.empty() || repeats < 1) throw InfeasibleSpec("need at least one class and band");
  const double total = std::accumulate(fractions.begin(), fractions.end(), 0.0);
  std::vector<ClassRegion> regions(fractions.size());
  const double length = upper - lower;
  double at = lower;
  for (int r = 0; r < repeats; ++r) {
    for (std::size_t c = 0; c < fractions.size(); ++c) {
      const double width = length * fractions[c] / total / repeats;
      regions[c].bands.push_back({at, at + width});
      at += width;
    }
  }
  regions.back().bands.back().upper = upper;
  return regions;
}

std::vector<ClassRegion> centred_band(double lower, double upper, double fraction) {
  const double mid = 0.5 * (lower + upper);
  const double half = 0.5 * fraction * (upper - lower);
  std::vector<ClassRegion> regions(2);
  regions[0].bands.push_back({mid - half, mid + half});
  regions[1].bands.push_back({lower, mid - half});
  regions[1].bands.push_back({mid + half, upper});
  return regions;
}

namespace {

template <int D>
class Sampler {
 public:
  Sampler(const Domain<D>& domain, const SpatialSpec& spec, std::size_t n)
      : domain_(domain), spec_(spec), rng_(spec.rng_seed),
        separation_(1e-6 * domain.diameter()) {
    // Hash cells of roughly one seed each.
    const double spacing = std::pow(domain.volume() / std::max<std::size_t>(n, 1), 1.0 / D);
    cell_ = std::max(spacing, separation_);
  }

  Vec<D> uniform_point() {
    Vec<D> p;
    for (int k = 0; k < D; ++k) p[k] = rng_.uniform(domain_.lower[k], domain_.upper[k]);
    return p;
  }

  Vec<D> in_bands(const std::vector<Interval>& bands) {
    double total = 0.0;
    for (const auto& b : bands) total += b.upper - b.lower;
    double pick = rng_.uniform() * total;
    const Interval* chosen = &bands.back();
    for (const auto& b : bands) {
      if (pick < b.upper - b.lower) {
        chosen = &b;
        break;
      }
      pick -= b.upper - b.lower;
    }
    Vec<D> p = uniform_point();
    p[spec_.band_axis] = rng_.uniform(chosen->lower, chosen->upper);
    return p;
  }

  bool in_disc(const Vec<D>& p, const Ball& b) const {
    Vec<D> c;
    for (int k = 0; k < D; ++k) c[k] = b.centre[k];
    return domain_.difference(c, p).norm() <= b.radius;
  }

  Vec<D> in_discs(const std::vector<Ball>& discs) {
    std::vector<double> weight;
    for (const auto& b : discs) weight.push_back(std::pow(b.radius, D));
    const double total = std::accumulate(weight.begin(), weight.end(), 0.0);
    for (int attempt = 0; attempt < 10000; ++attempt) {
      double pick = rng_.uniform() * total;
      std::size_t k = 0;
      while (k + 1 < discs.size() && pick >= weight[k]) pick -= weight[k++];
      const Ball& b = discs[k];
      Vec<D> p;
      for (int a = 0; a < D; ++a) p[a] = b.centre[a] + rng_.uniform(-b.radius, b.radius);
      if (domain_.periodic) p = domain_.wrap(p);
      if (in_disc(p, b) && domain_.contains(p)) return p;
    }
    throw InfeasibleSpec("cluster discs do not meet the domain");
  }

  Vec<D> outside_discs(const std::vector<Ball>& all) {
    for (int attempt = 0; attempt < 10000; ++attempt) {
      const Vec<D> p = uniform_point();
      bool inside = false;
      for (const auto& b : all) inside = inside || in_disc(p, b);
      if (!inside) return p;
    }
    throw InfeasibleSpec("cluster discs cover the domain");
  }

  // Reject-and-resample until the point keeps the minimum separation.
  template <typename Draw>
  Vec<D> place(Draw&& draw) {
    for (int attempt = 0; attempt < 1000; ++attempt) {
      const Vec<D> p = draw();
      if (separated(p)) {
        insert(p);
        return p;
      }
    }
    throw InfeasibleSpec("cannot place seeds at the minimum separation");
  }

  Rng& rng() { return rng_; }

 private:
  std::int64_t key(const Eigen::Matrix<std::int64_t, D, 1>& c) const {
    std::int64_t h = 0;
    for (int k = 0; k < D; ++k) h = h * 2097143 + c[k];
    return h;
  }

  Eigen::Matrix<std::int64_t, D, 1> cell_of(const Vec<D>& p) const {
    Eigen::Matrix<std::int64_t, D, 1> c;
    for (int k = 0; k < D; ++k)
      c[k] = static_cast<std::int64_t>(std::floor((p[k] - domain_.lower[k]) / cell_));
    return c;
  }

  bool separated(const Vec<D>& p) const {
    const auto home = cell_of(p);
    const int combos = D == 2 ? 9 : 27;
    for (int c = 0; c < combos; ++c) {
      Eigen::Matrix<std::int64_t, D, 1> idx = home;
      int rest = c;
      for (int k = 0; k < D; ++k) {
        idx[k] += rest % 3 - 1;
        rest /= 3;
        if (domain_.periodic) {
          const auto count = static_cast<std::int64_t>(std::ceil(domain_.lengths()[k] / cell_));
          idx[k] = ((idx[k] % count) + count) % count;
        }
      }
      auto it = buckets_.find(key(idx));
      if (it == buckets_.end()) continue;
      for (const auto& q : it->second)
        if (domain_.distance(p, q) < separation_) return false;
    }
    return true;
  }

  void insert(const Vec<D>& p) { buckets_[key(cell_of(p))].push_back(p); }

  const Domain<D>& domain_;
  const SpatialSpec& spec_;
  Rng rng_;
  double separation_;
  double cell_;
  std::unordered_map<std::int64_t, std::vector<Vec<D>>> buckets_;
};

}  // namespace

template <int D>
std::vector<Vec<D>> sample_positions(const Domain<D>& domain, std::size_t n,
                                     const SpatialSpec& spec, std::span<const int> classes,
                                     std::span<const double> sizes) {
  domain.validate();
  if (!classes.empty() && classes.size() != n)
    throw InfeasibleSpec("class labels do not match the seed count");
  auto label = [&](std::size_t i) { return classes.empty() ? 0 : classes[i]; };
  auto region = [&](std::size_t i) -> const ClassRegion& {
    const int c = label(i);
    if (c < 0 || c >= static_cast<int>(spec.regions.size())) {
      std::ostringstream msg;
      msg << "no region given for size class " << c;
      throw InfeasibleSpec(msg.str());
    }
    return spec.regions[c];
  };

  std::vector<Vec<D>> out(n);
  Sampler<D> sampler(domain, spec, n);

  switch (spec.kind) {
    case SpatialKind::kExplicit: {
      if (spec.positions.size() != n) throw InfeasibleSpec("explicit positions do not match n");
      for (std::size_t i = 0; i < n; ++i) {
        if (spec.positions[i].size() != static_cast<std::size_t>(D))
          throw InfeasibleSpec("explicit position has the wrong dimension");
        for (int k = 0; k < D; ++k) out[i][k] = spec.positions[i][k];
        const Vec<D> p = out[i];
        sampler.place([&] { return p; });
      }
      break;
    }
    case SpatialKind::kUniform:
      for (auto& p : out) p = sampler.place([&] { return sampler.uniform_point(); });
      break;
    case SpatialKind::kBanded:
    case SpatialKind::kMixed: {
      if (spec.band_axis < 0 || spec.band_axis >= D) throw InfeasibleSpec("band axis out of range");
      // Mixed: the first round(fraction * count) members of a class go anywhere.
      std::vector<std::size_t> seen(spec.regions.size(), 0), count(spec.regions.size(), 0);
      for (std::size_t i = 0; i < n; ++i) {
        region(i);
        ++count[label(i)];
      }
      for (std::size_t i = 0; i < n; ++i) {
        const ClassRegion& r = region(i);
        const int c = label(i);
        const double fraction = spec.kind == SpatialKind::kMixed ? r.random_fraction : 0.0;
        const bool random = static_cast<double>(seen[c]++) < std::round(fraction * count[c]);
        if (!random) {
          if (r.bands.empty()) throw InfeasibleSpec("size class has no bands");
          for (const auto& b : r.bands)
            if (!(b.upper > b.lower) || b.lower < domain.lower[spec.band_axis] ||
                b.upper > domain.upper[spec.band_axis])
              throw InfeasibleSpec("band is empty or leaves the domain");
        }
        out[i] = sampler.place([&] { return random ? sampler.uniform_point() : sampler.in_bands(r.bands); });
      }
      break;
    }
    case SpatialKind::kClustered: {
      std::vector<Ball> all;
      for (const auto& r : spec.regions)
        for (const auto& b : r.discs) {
          if (b.centre.size() != static_cast<std::size_t>(D) || !(b.radius > 0.0))
            throw InfeasibleSpec("malformed cluster disc");
          all.push_back(b);
        }
      for (std::size_t i = 0; i < n; ++i) {
        const ClassRegion& r = region(i);
        out[i] = sampler.place(
            [&] { return r.discs.empty() ? sampler.outside_discs(all) : sampler.in_discs(r.discs); });
      }
      break;
    }
    case SpatialKind::kGradient: {
      if (sizes.size() != n) throw InfeasibleSpec("gradient kind needs one size per seed");
      const int axis = spec.gradient_axis;
      if (axis < 0 || axis >= D) throw InfeasibleSpec("gradient axis out of range");
      std::vector<double> coord(n);
      for (auto& c : coord) c = sampler.rng().uniform(domain.lower[axis], domain.upper[axis]);
      const double mid = 0.5 * (domain.lower[axis] + domain.upper[axis]);
      // Order coordinates from "small-grain end" to "large-grain end".
      auto rank_key = [&](double c) { return spec.gradient_centred ? -std::abs(c - mid) : c; };
      std::sort(coord.begin(), coord.end(),
                [&](double a, double b) { return rank_key(a) < rank_key(b); });
      std::vector<std::size_t> order(n);
      std::iota(order.begin(), order.end(), 0);
      std::stable_sort(order.begin(), order.end(),
                       [&](std::size_t a, std::size_t b) { return sizes[a] < sizes[b]; });
      for (std::size_t r = 0; r < n; ++r) {
        const std::size_t i = order[r];
        out[i] = sampler.place([&] {
          Vec<D> p = sampler.uniform_point();
          p[axis] = coord[r];
          return p;
        });
      }
      break;
    }
  }
  return out;
}

TargetDraw make_targets(double domain_volume, int d, const VolumeSpec& spec, Rng& rng) {
  TargetDraw draw;
  std::vector<double> m;
  switch (spec.kind) {
    case VolumeKind::kExplicit:
      m = spec.values;
      draw.classes.assign(m.size(), 0);
      draw.targets = TargetSpec::normalised(m, domain_volume);
      return draw;
    case VolumeKind::kBimodal: {
      if (spec.n1 < 0 || spec.n2 < 0 || spec.n1 + spec.n2 == 0 || !(spec.ratio > 0.0))
        throw InfeasibleSpec("bimodal spec needs n1 + n2 > 0 and ratio > 0");
      const double x = domain_volume / (spec.n1 + spec.ratio * spec.n2);
      m.assign(spec.n1, x);
      m.insert(m.end(), spec.n2, spec.ratio * x);
      draw.classes.assign(spec.n1, 0);
      draw.classes.insert(draw.classes.end(), spec.n2, 1);
      break;
    }
    case VolumeKind::kLognormal: {
      if (spec.n <= 0 || !(spec.mean > 0.0) || !(spec.sd >= 0.0))
        throw InfeasibleSpec("lognormal spec needs n > 0, mean > 0, sd >= 0");
      const double cv = spec.sd / spec.mean;
      const double sigma = std::sqrt(std::log1p(cv * cv));
      const double mu = std::log(spec.mean) - 0.5 * sigma * sigma;
      for (int i = 0; i < spec.n; ++i) m.push_back(std::pow(std::exp(mu + sigma * rng.normal()), d));
      draw.classes.assign(spec.n, 0);
      break;
    }
    case VolumeKind::kUniformRatio: {
      if (spec.n <= 0 || !(spec.max_ratio >= 1.0))
        throw InfeasibleSpec("uniform-ratio spec needs n > 0 and max_ratio >= 1");
      for (int i = 0; i < spec.n; ++i) m.push_back(rng.uniform(1.0, spec.max_ratio));
      draw.classes.assign(spec.n, 0);
      break;
    }
  }
  const double sum = std::accumulate(m.begin(), m.end(), 0.0);
  for (double& v : m) v *= domain_volume / sum;
  draw.targets = TargetSpec{std::move(m)};
  return draw;
}

double coefficient_of_variation(std::span<const double> values) {
  const double n = static_cast<double>(values.size());
  const double mean = std::accumulate(values.begin(), values.end(), 0.0) / n;
  double ss = 0.0;
  for (double v : values) ss += (v - mean) * (v - mean);
  return std::sqrt(ss / (n - 1.0)) / mean;
}

template std::vector<Vec<2>> sample_positions(const Domain<2>&, std::size_t, const SpatialSpec&,
                                              std::span<const int>, std::span<const double>);
template std::vector<Vec<3>> sample_positions(const Domain<3>&, std::size_t, const SpatialSpec&,
                                              std::span<const int>, std::span<const double>);

}  // namespace laguerre
