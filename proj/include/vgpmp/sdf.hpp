#pragma once

#include <array>
#include <bit>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <string>
#include <variant>
#include <vector>

#include <Eigen/Dense>

#include "vgpmp/errors.hpp"

namespace vgpmp {

struct SpherePrimitive {
  Eigen::Vector3d center = Eigen::Vector3d::Zero();
  double radius = 0.0;
};

struct BoxPrimitive {
  Eigen::Vector3d center = Eigen::Vector3d::Zero();
  Eigen::Vector3d half_extents = Eigen::Vector3d::Zero();
};

using Primitive = std::variant<SpherePrimitive, BoxPrimitive>;

struct Aabb {
  Eigen::Vector3d min = Eigen::Vector3d::Zero();
  Eigen::Vector3d max = Eigen::Vector3d::Zero();
};

struct PrimitiveScene {
  std::vector<Primitive> primitives;
  Aabb bounds;

  void validate() const {
    for (int a = 0; a < 3; ++a)
      if (!(bounds.max[a] > bounds.min[a]))
        throw InvalidArgument("scene bounds must be a nonempty box");
    for (const auto &prim : primitives) {
      if (const auto *s = std::get_if<SpherePrimitive>(&prim)) {
        if (!s->center.allFinite() || !(s->radius > 0.0) || !std::isfinite(s->radius))
          throw InvalidArgument("sphere primitive must be finite with positive radius");
      } else {
        const auto &b = std::get<BoxPrimitive>(prim);
        if (!b.center.allFinite() || !b.half_extents.allFinite() || (b.half_extents.array() <= 0.0).any())
          throw InvalidArgument("box primitive must be finite with positive half extents");
      }
    }
  }
};

/// Analytic signed distance to one primitive, negative inside.
inline double signed_distance(const Primitive &prim, const Eigen::Vector3d &p) {
  if (const auto *s = std::get_if<SpherePrimitive>(&prim))
    return (p - s->center).norm() - s->radius;
  const auto &b = std::get<BoxPrimitive>(prim);
  const Eigen::Vector3d q = (p - b.center).cwiseAbs() - b.half_extents;
  const double outside = q.cwiseMax(0.0).norm();
  const double inside = std::min(q.maxCoeff(), 0.0);
  return outside + inside;
}

/// Min over primitives; exact outside the union. Without primitives the
/// field is +infinity.
inline double scene_distance(const PrimitiveScene &scene, const Eigen::Vector3d &p) {
  double d = std::numeric_limits<double>::infinity();
  for (const auto &prim : scene.primitives)
    d = std::min(d, signed_distance(prim, p));
  return d;
}

/// Signed distances sampled on a regular lattice. Sample (i, j, k) sits at
/// origin + resolution * (i, j, k); values are x-fastest.
struct SdfGrid {
  Eigen::Vector3d origin = Eigen::Vector3d::Zero();
  double resolution = 1.0;
  std::array<std::uint32_t, 3> dims{0, 0, 0};
  std::vector<double> values;

  [[nodiscard]] std::size_t index(std::size_t i, std::size_t j, std::size_t k) const {
    return i + dims[0] * (j + dims[1] * k);
  }
  [[nodiscard]] double at(std::size_t i, std::size_t j, std::size_t k) const {
    return values[index(i, j, k)];
  }
  [[nodiscard]] Eigen::Vector3d voxel_center(std::size_t i, std::size_t j, std::size_t k) const {
    return origin + resolution * Eigen::Vector3d(static_cast<double>(i), static_cast<double>(j),
                                                 static_cast<double>(k));
  }
  [[nodiscard]] Eigen::Vector3d upper_corner() const {
    return origin + resolution * Eigen::Vector3d(dims[0] - 1.0, dims[1] - 1.0, dims[2] - 1.0);
  }
  [[nodiscard]] std::size_t voxel_count() const {
    return static_cast<std::size_t>(dims[0]) * dims[1] * dims[2];
  }
};

inline constexpr std::size_t kDefaultMaxVoxels = 64ull * 1024 * 1024;

/// Value assigned to voxels of a scene without primitives.
inline constexpr double kEmptySceneDistance = 1e3;

inline SdfGrid build_grid(const PrimitiveScene &scene, double resolution,
                          std::size_t max_voxels = kDefaultMaxVoxels) {
  if (!(resolution > 0.0) || !std::isfinite(resolution))
    throw InvalidArgument("grid resolution must be positive");
  scene.validate();
  SdfGrid grid;
  grid.origin = scene.bounds.min;
  grid.resolution = resolution;
  std::size_t total = 1;
  for (int a = 0; a < 3; ++a) {
    const double cells = (scene.bounds.max[a] - scene.bounds.min[a]) / resolution;
    const double n = std::ceil(cells - 1e-9) + 1.0;
    if (n > static_cast<double>(max_voxels))
      throw GridTooLarge("grid axis exceeds the voxel cap");
    grid.dims[static_cast<std::size_t>(a)] = static_cast<std::uint32_t>(n);
    total *= grid.dims[static_cast<std::size_t>(a)];
    if (total > max_voxels)
      throw GridTooLarge("grid of " + std::to_string(total) + "+ voxels exceeds the cap of " +
                         std::to_string(max_voxels));
  }
  grid.values.resize(total);
  for (std::uint32_t k = 0; k < grid.dims[2]; ++k)
    for (std::uint32_t j = 0; j < grid.dims[1]; ++j)
      for (std::uint32_t i = 0; i < grid.dims[0]; ++i) {
        const double d = scene.primitives.empty() ? kEmptySceneDistance
                                                  : scene_distance(scene, grid.voxel_center(i, j, k));
        grid.values[grid.index(i, j, k)] = d;
      }
  return grid;
}

/// Interpolated distance with its gradient and the cell that produced it.
struct SdfSample {
  double distance = 0.0;
  Eigen::Vector3d gradient = Eigen::Vector3d::Zero();
  std::array<int, 3> cell{0, 0, 0};
  /// bit a set when the point lies outside the grid along axis a
  int clamped_axes = 0;
};

/// Trilinear interpolation of the 8 surrounding samples. Points outside the
/// grid are clamped to its boundary and the exterior Euclidean distance to
/// the grid box is added.
inline SdfSample query_with_gradient(const SdfGrid &grid, const Eigen::Vector3d &p) {
  SdfSample out;
  const Eigen::Vector3d hi = grid.upper_corner();
  Eigen::Vector3d q = p;
  for (int a = 0; a < 3; ++a) {
    if (p[a] < grid.origin[a]) {
      q[a] = grid.origin[a];
      out.clamped_axes |= 1 << a;
    } else if (p[a] > hi[a]) {
      q[a] = hi[a];
      out.clamped_axes |= 1 << a;
    }
  }
  std::array<std::size_t, 3> i0{};
  std::array<std::size_t, 3> i1{};
  Eigen::Vector3d frac;
  for (int a = 0; a < 3; ++a) {
    const auto ua = static_cast<std::size_t>(a);
    const auto n = static_cast<long>(grid.dims[ua]);
    const double x = (q[a] - grid.origin[a]) / grid.resolution;
    long c = static_cast<long>(std::floor(x));
    c = std::clamp(c, 0L, std::max(n - 2, 0L));
    i0[ua] = static_cast<std::size_t>(c);
    i1[ua] = static_cast<std::size_t>(std::min(c + 1, n - 1));
    frac[a] = n > 1 ? std::clamp(x - static_cast<double>(c), 0.0, 1.0) : 0.0;
    out.cell[ua] = static_cast<int>(c);
  }
  const double c000 = grid.at(i0[0], i0[1], i0[2]);
  const double c100 = grid.at(i1[0], i0[1], i0[2]);
  const double c010 = grid.at(i0[0], i1[1], i0[2]);
  const double c110 = grid.at(i1[0], i1[1], i0[2]);
  const double c001 = grid.at(i0[0], i0[1], i1[2]);
  const double c101 = grid.at(i1[0], i0[1], i1[2]);
  const double c011 = grid.at(i0[0], i1[1], i1[2]);
  const double c111 = grid.at(i1[0], i1[1], i1[2]);
  const double x = frac[0];
  const double y = frac[1];
  const double z = frac[2];

  const double c00 = c000 + x * (c100 - c000);
  const double c10 = c010 + x * (c110 - c010);
  const double c01 = c001 + x * (c101 - c001);
  const double c11 = c011 + x * (c111 - c011);
  const double c0 = c00 + y * (c10 - c00);
  const double c1 = c01 + y * (c11 - c01);
  out.distance = c0 + z * (c1 - c0);

  const double dx = (1 - y) * (1 - z) * (c100 - c000) + y * (1 - z) * (c110 - c010) +
                    (1 - y) * z * (c101 - c001) + y * z * (c111 - c011);
  const double dy = (1 - z) * (c10 - c00) + z * (c11 - c01);
  const double dz = c1 - c0;
  out.gradient = Eigen::Vector3d(dx, dy, dz) / grid.resolution;
  for (int a = 0; a < 3; ++a)
    if ((out.clamped_axes >> a) & 1 || grid.dims[static_cast<std::size_t>(a)] < 2)
      out.gradient[a] = 0.0;

  if (out.clamped_axes != 0) {
    const Eigen::Vector3d offset = p - q;
    const double r = offset.norm();
    out.distance += r;
    if (r > 0.0)
      out.gradient += offset / r;
  }
  return out;
}

inline double query(const SdfGrid &grid, const Eigen::Vector3d &p) {
  return query_with_gradient(grid, p).distance;
}

/// Hinge loss max(eps - x, 0) on a surface distance x.
inline double hinge(double surface_distance, double eps) {
  return std::max(eps - surface_distance, 0.0);
}

/// Per-sphere hinge on (center distance - radius).
inline Eigen::VectorXd hinge(const Eigen::VectorXd &distances, const Eigen::VectorXd &radii,
                             double eps) {
  if (!(eps >= 0.0))
    throw InvalidArgument("safety distance must be nonnegative");
  Eigen::VectorXd out(distances.size());
  for (Eigen::Index j = 0; j < distances.size(); ++j)
    out[j] = hinge(distances[j] - radii[j], eps);
  return out;
}

namespace detail {

inline constexpr char kSdfMagic[8] = {'V', 'G', 'P', 'M', 'P', 'S', 'D', 'F'};
inline constexpr std::uint32_t kSdfVersion = 1;

template <typename T> void put_le(std::vector<unsigned char> &buf, T value) {
  std::uint64_t bits = 0;
  if constexpr (std::is_floating_point_v<T>) {
    if constexpr (sizeof(T) == 8)
      bits = std::bit_cast<std::uint64_t>(value);
    else
      bits = std::bit_cast<std::uint32_t>(value);
  } else {
    bits = static_cast<std::uint64_t>(value);
  }
  for (std::size_t b = 0; b < sizeof(T); ++b)
    buf.push_back(static_cast<unsigned char>((bits >> (8 * b)) & 0xff));
}

template <typename T> T get_le(const std::vector<unsigned char> &buf, std::size_t &pos) {
  if (pos + sizeof(T) > buf.size())
    throw ParseError("truncated SDF file");
  std::uint64_t bits = 0;
  for (std::size_t b = 0; b < sizeof(T); ++b)
    bits |= static_cast<std::uint64_t>(buf[pos + b]) << (8 * b);
  pos += sizeof(T);
  if constexpr (std::is_floating_point_v<T>) {
    if constexpr (sizeof(T) == 8)
      return std::bit_cast<double>(bits);
    else
      return std::bit_cast<float>(static_cast<std::uint32_t>(bits));
  } else {
    return static_cast<T>(bits);
  }
}

} // namespace detail

/// Binary cache: 16-byte header ("VGPMPSDF", uint32 version, uint32 zero),
/// then little-endian 3 x uint32 dims, 3 x float64 origin, float64
/// resolution and nx*ny*nz float32 values, x-fastest.
inline std::vector<unsigned char> encode_sdf(const SdfGrid &grid) {
  std::vector<unsigned char> buf;
  buf.reserve(16 + 12 + 32 + 4 * grid.values.size());
  buf.insert(buf.end(), std::begin(detail::kSdfMagic), std::end(detail::kSdfMagic));
  detail::put_le<std::uint32_t>(buf, detail::kSdfVersion);
  detail::put_le<std::uint32_t>(buf, 0);
  for (auto n : grid.dims)
    detail::put_le<std::uint32_t>(buf, n);
  for (int a = 0; a < 3; ++a)
    detail::put_le<double>(buf, grid.origin[a]);
  detail::put_le<double>(buf, grid.resolution);
  for (double v : grid.values)
    detail::put_le<float>(buf, static_cast<float>(v));
  return buf;
}

inline SdfGrid decode_sdf(const std::vector<unsigned char> &buf) {
  if (buf.size() < 16 || std::memcmp(buf.data(), detail::kSdfMagic, 8) != 0)
    throw ParseError("not a VGPMPSDF file");
  std::size_t pos = 8;
  const auto version = detail::get_le<std::uint32_t>(buf, pos);
  if (version != detail::kSdfVersion)
    throw ParseError("unsupported SDF version " + std::to_string(version));
  pos = 16;
  SdfGrid grid;
  for (auto &n : grid.dims)
    n = detail::get_le<std::uint32_t>(buf, pos);
  for (int a = 0; a < 3; ++a)
    grid.origin[a] = detail::get_le<double>(buf, pos);
  grid.resolution = detail::get_le<double>(buf, pos);
  if (!(grid.resolution > 0.0))
    throw ParseError("SDF resolution must be positive");
  const std::size_t count = grid.voxel_count();
  if (buf.size() - pos != 4 * count)
    throw ParseError("SDF payload size does not match its dimensions");
  grid.values.resize(count);
  for (std::size_t i = 0; i < count; ++i)
    grid.values[i] = detail::get_le<float>(buf, pos);
  return grid;
}

inline void write_sdf(const SdfGrid &grid, const std::string &path) {
  const auto buf = encode_sdf(grid);
  std::ofstream out(path, std::ios::binary);
  if (!out)
    throw Error("cannot open " + path + " for writing");
  out.write(reinterpret_cast<const char *>(buf.data()), static_cast<std::streamsize>(buf.size()));
}

inline SdfGrid read_sdf(const std::string &path) {
  std::ifstream in(path, std::ios::binary);
  if (!in)
    throw Error("cannot open " + path);
  std::vector<unsigned char> buf((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  return decode_sdf(buf);
}

} // namespace vgpmp
