#pragma once

#include <cstddef>
#include <filesystem>
#include <span>
#include <vector>

#include <Eigen/Core>

#include "loom/camera_geometry.hpp"
#include "loom/event_core.hpp"

namespace loom {

// Dense voxel lattice in the ego frame with a common edge length.
struct VoxelGridConfig {
  Eigen::Vector3d start = Eigen::Vector3d::Zero();  // centre of voxel (1, 1, 1)
  double step = 0.5;                                // m
  int nx = 1;
  int ny = 1;
  int nz = 1;

  void validate() const;  // throws InvalidArgument
  std::size_t count() const { return static_cast<std::size_t>(nx) * ny * nz; }
};

// Centre of voxel (i, j, k), 1-based in each axis.
Eigen::Vector3d voxel_center(const VoxelGridConfig& cfg, int i, int j, int k);

// All centres with i fastest, then j, then k.
std::vector<Eigen::Vector3d> voxel_centers(const VoxelGridConfig& cfg);

// C-vector per voxel; values[((k * ny + j) * nx + i) * channels + c], 0-based.
struct VoxelVolume {
  int nx = 0, ny = 0, nz = 0, channels = 0;
  std::vector<double> values;

  VoxelVolume() = default;
  VoxelVolume(int nx, int ny, int nz, int channels)
      : nx(nx), ny(ny), nz(nz), channels(channels),
        values(static_cast<std::size_t>(nx) * ny * nz * channels, 0.0) {}

  double at(int i, int j, int k, int c = 0) const { return values[index(i, j, k, c)]; }
  double& at(int i, int j, int k, int c = 0) { return values[index(i, j, k, c)]; }

  std::size_t index(int i, int j, int k, int c) const {
    return ((static_cast<std::size_t>(k) * ny + j) * nx + i) * channels + c;
  }
};

// Samples a front-view feature map at the projection of every voxel centre.
// Voxels behind the camera or projecting outside the image get zeros.
VoxelVolume gather_features(const Grid2D& fv_map, const VoxelGridConfig& cfg, const Intrinsics& intr,
                            const RigidTransform& cam_from_ego);

// BEV grid: features.at(i, j) is the cell centred at (x_i, y_j) of `grid`.
struct BevFeatureMap {
  VoxelGridConfig grid;
  Grid2D features;
  RigidTransform world_from_ego;
  Micros t = 0;
};

// Mean over the height axis.
BevFeatureMap reduce_height(const VoxelVolume& volume, const VoxelGridConfig& cfg,
                            const RigidTransform& world_from_ego = {}, Micros t = 0);

// Resamples `prev` onto the grid of an ego at `cur_pose`. Each current cell
// centre (on the z = 0 plane) is carried into the previous ego frame, its z
// dropped, and sampled bilinearly; cells landing off the grid get zeros.
BevFeatureMap warp_bev(const BevFeatureMap& prev, const RigidTransform& cur_pose, Micros cur_t);

// Flat little-endian f32 tensor plus a JSON sidecar `<path>.json` holding
// {"shape": [...], "dtype": "f32", "layout": "row-major"}.
struct Tensor {
  std::vector<std::size_t> shape;
  std::vector<float> values;
};

void write_tensor(const std::filesystem::path& path, std::span<const double> values,
                  const std::vector<std::size_t>& shape);
Tensor read_tensor(const std::filesystem::path& path);

void write_tensor(const std::filesystem::path& path, const Grid2D& grid);          // [h, w, c]
void write_tensor(const std::filesystem::path& path, const VoxelVolume& volume);   // [nz, ny, nx, c]

}  // namespace loom
