#include "laguerre/oracle.hpp"

#include <limits>
#include <ostream>
#include <stdexcept>

namespace laguerre::oracle {

template <int D>
VoxelGrid<D> voxel_assign(const Domain<D>& domain, std::span<const WeightedSeed<D>> seeds,
                          int resolution) {
  if (resolution < 8) throw std::invalid_argument("voxel resolution must be at least 8");
  domain.validate();
  VoxelGrid<D> grid;
  grid.domain = domain;
  grid.resolution.setConstant(resolution);
  grid.voxel_size = domain.lengths() / static_cast<double>(resolution);
  std::size_t total = 1;
  for (int k = 0; k < D; ++k) total *= static_cast<std::size_t>(resolution);
  grid.labels.assign(total, 0);
  grid.seeds.clear();
  for (const auto& s : seeds)
    grid.seeds.push_back(domain.periodic ? domain.wrap(s.position) : s.position);

  const long long rows = static_cast<long long>(total / resolution);
  const int n = static_cast<int>(seeds.size());
#pragma omp parallel for schedule(static)
  for (long long row = 0; row < rows; ++row) {
    Vec<D> centre;
    long long rest = row;
    for (int k = 1; k < D; ++k) {
      centre[k] = domain.lower[k] + (static_cast<double>(rest % resolution) + 0.5) * grid.voxel_size[k];
      rest /= resolution;
    }
    for (int i0 = 0; i0 < resolution; ++i0) {
      centre[0] = domain.lower[0] + (i0 + 0.5) * grid.voxel_size[0];
      int best = 0;
      double best_power = std::numeric_limits<double>::infinity();
      for (int i = 0; i < n; ++i) {
        const double p = domain.difference(grid.seeds[i], centre).squaredNorm() - seeds[i].weight;
        if (p < best_power) {
          best_power = p;
          best = i;
        }
      }
      grid.labels[row * resolution + i0] = best;
    }
  }

  grid.counts.assign(n, 0);
  grid.offset_sums.assign(n, Vec<D>::Zero());
  for (std::size_t v = 0; v < total; ++v) {
    Vec<D> centre;
    std::size_t rest = v;
    for (int k = 0; k < D; ++k) {
      centre[k] = domain.lower[k] + (static_cast<double>(rest % resolution) + 0.5) * grid.voxel_size[k];
      rest /= resolution;
    }
    const int label = grid.labels[v];
    ++grid.counts[label];
    grid.offset_sums[label] += domain.difference(grid.seeds[label], centre);
  }
  return grid;
}

template <int D>
std::vector<double> voxel_volumes(const VoxelGrid<D>& grid) {
  std::vector<double> out;
  out.reserve(grid.counts.size());
  for (long long c : grid.counts) out.push_back(static_cast<double>(c) * grid.voxel_volume());
  return out;
}

template <int D>
std::vector<Vec<D>> voxel_centroids(const VoxelGrid<D>& grid) {
  std::vector<Vec<D>> out;
  out.reserve(grid.counts.size());
  for (std::size_t i = 0; i < grid.counts.size(); ++i) {
    if (grid.counts[i] == 0) throw EmptyCell("seed owns no voxel");
    out.push_back(grid.seeds[i] + grid.offset_sums[i] / static_cast<double>(grid.counts[i]));
  }
  return out;
}

template <int D>
void write_label_raster(const VoxelGrid<D>& grid, std::ostream& out) {
  const int res = grid.resolution[0];
  for (std::size_t v = 0; v < grid.labels.size(); ++v) {
    out << grid.labels[v];
    if ((v + 1) % res != 0) {
      out << ' ';
    } else {
      out << '\n';
      if (D == 3 && (v + 1) % (static_cast<std::size_t>(res) * res) == 0) out << '\n';
    }
  }
}

template struct VoxelGrid<2>;
template struct VoxelGrid<3>;
template VoxelGrid<2> voxel_assign(const Domain<2>&, std::span<const WeightedSeed<2>>, int);
template VoxelGrid<3> voxel_assign(const Domain<3>&, std::span<const WeightedSeed<3>>, int);
template std::vector<double> voxel_volumes(const VoxelGrid<2>&);
template std::vector<double> voxel_volumes(const VoxelGrid<3>&);
template std::vector<Vec<2>> voxel_centroids(const VoxelGrid<2>&);
template std::vector<Vec<3>> voxel_centroids(const VoxelGrid<3>&);
template void write_label_raster(const VoxelGrid<2>&, std::ostream&);
template void write_label_raster(const VoxelGrid<3>&, std::ostream&);

}  // namespace laguerre::oracle
