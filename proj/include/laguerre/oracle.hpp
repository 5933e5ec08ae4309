#pragma once

// Brute-force voxel reference for Laguerre diagrams. Every voxel centre is
// labelled with its power-nearest seed (ties to the lowest index); test-only.

#include <iosfwd>
#include <span>
#include <vector>

#include "laguerre/diagram.hpp"

namespace laguerre::oracle {

template <int D>
struct VoxelGrid {
  Domain<D> domain;
  Eigen::Matrix<int, D, 1> resolution;
  Vec<D> voxel_size;
  /// Row-major with axis 0 fastest.
  std::vector<int> labels;
  std::vector<long long> counts;
  /// Sum over member voxels of (centre - seed), minimal image when periodic.
  std::vector<Vec<D>> offset_sums;
  std::vector<Vec<D>> seeds;

  double voxel_volume() const { return voxel_size.prod(); }
  std::size_t num_voxels() const { return labels.size(); }
};

template <int D>
VoxelGrid<D> voxel_assign(const Domain<D>& domain, std::span<const WeightedSeed<D>> seeds,
                          int resolution);

template <int D>
std::vector<double> voxel_volumes(const VoxelGrid<D>& grid);

/// Throws EmptyCell when a seed owns no voxel.
template <int D>
std::vector<Vec<D>> voxel_centroids(const VoxelGrid<D>& grid);

/// Dense label raster, one line per row of axis 0 (z-slices separated by a
/// blank line in 3D).
template <int D>
void write_label_raster(const VoxelGrid<D>& grid, std::ostream& out);

}  // namespace laguerre::oracle
