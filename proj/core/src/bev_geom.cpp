#include "loom/bev_geom.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <fstream>
#include <iterator>

#include <nlohmann/json.hpp>

#include "loom/error.hpp"

namespace loom {

namespace {

bool inside(const Grid2D& g, double u, double v) {
  return u >= 0.0 && v >= 0.0 && u <= g.width() - 1 && v <= g.height() - 1;
}

std::filesystem::path sidecar_of(const std::filesystem::path& path) {
  return std::filesystem::path(path.string() + ".json");
}

}  // namespace

void VoxelGridConfig::validate() const {
  if (!(step > 0.0)) throw Error(ErrorCode::kInvalidArgument, "voxel step must be positive");
  if (nx < 1 || ny < 1 || nz < 1) throw Error(ErrorCode::kInvalidArgument, "voxel counts must be >= 1");
  if (!start.allFinite()) throw Error(ErrorCode::kInvalidArgument, "voxel grid origin must be finite");
}

Eigen::Vector3d voxel_center(const VoxelGridConfig& cfg, int i, int j, int k) {
  return {cfg.start.x() + (i - 1) * cfg.step, cfg.start.y() + (j - 1) * cfg.step,
          cfg.start.z() + (k - 1) * cfg.step};
}

std::vector<Eigen::Vector3d> voxel_centers(const VoxelGridConfig& cfg) {
  cfg.validate();
  std::vector<Eigen::Vector3d> out;
  out.reserve(cfg.count());
  for (int k = 1; k <= cfg.nz; ++k) {
    for (int j = 1; j <= cfg.ny; ++j) {
      for (int i = 1; i <= cfg.nx; ++i) out.push_back(voxel_center(cfg, i, j, k));
    }
  }
  return out;
}

VoxelVolume gather_features(const Grid2D& fv_map, const VoxelGridConfig& cfg, const Intrinsics& intr,
                            const RigidTransform& cam_from_ego) {
  cfg.validate();
  const int c = fv_map.channels();
  VoxelVolume out(cfg.nx, cfg.ny, cfg.nz, c);
  for (int k = 0; k < cfg.nz; ++k) {
    for (int j = 0; j < cfg.ny; ++j) {
      for (int i = 0; i < cfg.nx; ++i) {
        const Eigen::Vector3d p = cam_from_ego.apply(voxel_center(cfg, i + 1, j + 1, k + 1));
        if (!(p.z() > 0.0)) continue;
        const Eigen::Vector2d uv = project_point(intr, p);
        if (!inside(fv_map, uv.x(), uv.y())) continue;
        bilinear_sample(fv_map, uv.x(), uv.y(), std::span(out.values).subspan(out.index(i, j, k, 0), c));
      }
    }
  }
  return out;
}

BevFeatureMap reduce_height(const VoxelVolume& volume, const VoxelGridConfig& cfg,
                            const RigidTransform& world_from_ego, Micros t) {
  if (volume.nz < 1) throw Error(ErrorCode::kInvalidArgument, "volume has no height layers");
  if (volume.nx != cfg.nx || volume.ny != cfg.ny || volume.nz != cfg.nz) {
    throw Error(ErrorCode::kInvalidArgument, "volume does not match the grid configuration");
  }
  BevFeatureMap out{cfg, Grid2D(volume.nx, volume.ny, volume.channels, 0.0), world_from_ego, t};
  for (int j = 0; j < volume.ny; ++j) {
    for (int i = 0; i < volume.nx; ++i) {
      for (int ch = 0; ch < volume.channels; ++ch) {
        double sum = 0.0;
        for (int k = 0; k < volume.nz; ++k) sum += volume.at(i, j, k, ch);
        out.features.at(i, j, ch) = sum / volume.nz;
      }
    }
  }
  return out;
}

BevFeatureMap warp_bev(const BevFeatureMap& prev, const RigidTransform& cur_pose, Micros cur_t) {
  const VoxelGridConfig& g = prev.grid;
  g.validate();
  const Grid2D& src = prev.features;
  // Equal poses skip the composition so the identity warp stays bit-exact.
  const RigidTransform prev_from_cur =
      prev.world_from_ego == cur_pose ? RigidTransform::identity() : prev.world_from_ego.inverse() * cur_pose;

  BevFeatureMap out{g, Grid2D(src.width(), src.height(), src.channels(), 0.0), cur_pose, cur_t};
  std::vector<double> px(src.channels());
  for (int j = 0; j < src.height(); ++j) {
    for (int i = 0; i < src.width(); ++i) {
      const Eigen::Vector3d l(g.start.x() + i * g.step, g.start.y() + j * g.step, 0.0);
      const Eigen::Vector3d q = prev_from_cur.apply(l);
      const double u = (q.x() - g.start.x()) / g.step;
      const double v = (q.y() - g.start.y()) / g.step;
      if (!inside(src, u, v)) continue;
      bilinear_sample(src, u, v, px);
      for (int c = 0; c < src.channels(); ++c) out.features.at(i, j, c) = px[c];
    }
  }
  return out;
}

void write_tensor(const std::filesystem::path& path, std::span<const double> values,
                  const std::vector<std::size_t>& shape) {
  std::size_t n = 1;
  for (auto d : shape) n *= d;
  if (n != values.size()) throw Error(ErrorCode::kInvalidArgument, "tensor shape does not match its data");

  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error(ErrorCode::kIo, "cannot write " + path.string());
  for (double v : values) {
    auto bits = std::bit_cast<std::uint32_t>(static_cast<float>(v));
    char le[4];
    for (int b = 0; b < 4; ++b) le[b] = static_cast<char>((bits >> (8 * b)) & 0xFF);
    out.write(le, 4);
  }

  nlohmann::json meta;
  meta["shape"] = shape;
  meta["dtype"] = "f32";
  meta["layout"] = "row-major";
  std::ofstream side(sidecar_of(path), std::ios::trunc);
  if (!side) throw Error(ErrorCode::kIo, "cannot write " + sidecar_of(path).string());
  side << meta.dump(2) << '\n';
}

Tensor read_tensor(const std::filesystem::path& path) {
  std::ifstream side(sidecar_of(path));
  if (!side) throw Error(ErrorCode::kIo, "cannot open " + sidecar_of(path).string());
  Tensor t;
  try {
    const auto meta = nlohmann::json::parse(side);
    if (meta.at("dtype") != "f32" || meta.at("layout") != "row-major") {
      throw Error(ErrorCode::kMalformedRecord, "unsupported tensor dtype or layout");
    }
    t.shape = meta.at("shape").get<std::vector<std::size_t>>();
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::kMalformedRecord, sidecar_of(path).string() + ": " + e.what());
  }

  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::kIo, "cannot open " + path.string());
  const std::vector<unsigned char> bytes{std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
  std::size_t n = 1;
  for (auto d : t.shape) n *= d;
  if (bytes.size() != 4 * n) throw Error(ErrorCode::kMalformedRecord, "tensor body does not match its shape");
  t.values.resize(n);
  for (std::size_t i = 0; i < n; ++i) {
    std::uint32_t bits = 0;
    for (int b = 0; b < 4; ++b) bits |= static_cast<std::uint32_t>(bytes[4 * i + b]) << (8 * b);
    t.values[i] = std::bit_cast<float>(bits);
  }
  return t;
}

void write_tensor(const std::filesystem::path& path, const Grid2D& grid) {
  write_tensor(path, grid.values(),
               {static_cast<std::size_t>(grid.height()), static_cast<std::size_t>(grid.width()),
                static_cast<std::size_t>(grid.channels())});
}

void write_tensor(const std::filesystem::path& path, const VoxelVolume& volume) {
  write_tensor(path, volume.values,
               {static_cast<std::size_t>(volume.nz), static_cast<std::size_t>(volume.ny),
                static_cast<std::size_t>(volume.nx), static_cast<std::size_t>(volume.channels)});
}

}  // namespace loom
