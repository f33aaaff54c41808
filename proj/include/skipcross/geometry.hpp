#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "skipcross/errors.hpp"
#include "skipcross/image.hpp"

namespace skipcross {

// LiDAR frame convention: x forward, y left, z up; meters.
struct LidarPoint {
  double x = 0, y = 0, z = 0;
  double intensity = 0;
};

using PointCloud = std::vector<LidarPoint>;

// proj: 3x4 intrinsics+projection, rect: 3x3 rectification,
// lidar_to_cam: 3x4 rigid transform; composed as proj * [rect] * [lidar_to_cam]
// with the 3x3/3x4 blocks embedded into homogeneous 4x4 matrices.
struct Calibration {
  std::array<double, 12> proj{};
  std::array<double, 9> rect{0, 0, 0, 0, 0, 0, 0, 0, 0};
  std::array<double, 12> lidar_to_cam{};

  static Calibration identity_extrinsics(const std::array<double, 12>& p) {
    Calibration c;
    c.proj = p;
    c.rect = {1, 0, 0, 0, 1, 0, 0, 0, 1};
    c.lidar_to_cam = {1, 0, 0, 0, 0, 1, 0, 0, 0, 0, 1, 0};
    return c;
  }

  // Full 3x4 composition in doubles.
  std::array<double, 12> composed() const {
    // rect embedded to 4x4 (bottom-right 1), lidar_to_cam embedded likewise
    std::array<double, 16> r4{};
    for (int i = 0; i < 3; ++i) {
      for (int j = 0; j < 3; ++j) {
        r4[static_cast<size_t>(i * 4 + j)] = rect[static_cast<size_t>(i * 3 + j)];
      }
    }
    r4[15] = 1.0;
    std::array<double, 16> t4{};
    for (int i = 0; i < 3; ++i) {
      for (int j = 0; j < 4; ++j) {
        t4[static_cast<size_t>(i * 4 + j)] =
            lidar_to_cam[static_cast<size_t>(i * 4 + j)];
      }
    }
    t4[15] = 1.0;
    std::array<double, 16> rt{};
    for (int i = 0; i < 4; ++i) {
      for (int j = 0; j < 4; ++j) {
        double s = 0;
        for (int k = 0; k < 4; ++k) {
          s += r4[static_cast<size_t>(i * 4 + k)] * t4[static_cast<size_t>(k * 4 + j)];
        }
        rt[static_cast<size_t>(i * 4 + j)] = s;
      }
    }
    std::array<double, 12> m{};
    for (int i = 0; i < 3; ++i) {
      for (int j = 0; j < 4; ++j) {
        double s = 0;
        for (int k = 0; k < 4; ++k) {
          s += proj[static_cast<size_t>(i * 4 + k)] * rt[static_cast<size_t>(k * 4 + j)];
        }
        m[static_cast<size_t>(i * 4 + j)] = s;
      }
    }
    return m;
  }
};

struct AltitudeCell {
  bool occupied = false;
  double altitude = 0;  // LiDAR-frame z, meters
  double depth = 0;     // projective depth, meters; positive when occupied
};

struct SparseAltitudeMap {
  int width = 0;
  int height = 0;
  std::vector<AltitudeCell> cells;

  SparseAltitudeMap() = default;
  SparseAltitudeMap(int w, int h)
      : width(w), height(h), cells(static_cast<size_t>(w) * h) {
    if (w <= 0 || h <= 0) throw ShapeError("altitude map dimensions must be positive");
  }

  AltitudeCell& at(int x, int y) {
    return cells[static_cast<size_t>(y) * width + x];
  }
  const AltitudeCell& at(int x, int y) const {
    return cells[static_cast<size_t>(y) * width + x];
  }
  int64_t occupied_count() const {
    int64_t n = 0;
    for (const AltitudeCell& c : cells) n += c.occupied;
    return n;
  }
};

struct AdiImage {
  int width = 0;
  int height = 0;
  std::vector<double> values;

  AdiImage() = default;
  AdiImage(int w, int h)
      : width(w), height(h), values(static_cast<size_t>(w) * h, 0.0) {}

  double& at(int x, int y) { return values[static_cast<size_t>(y) * width + x]; }
  double at(int x, int y) const {
    return values[static_cast<size_t>(y) * width + x];
  }
};

// Homogeneous projection of every point through the composed calibration.
// Points behind the camera (projective depth <= 0) and pixels outside the
// image are dropped; on collisions the nearest (smallest-depth) point wins.
// The stored altitude is the point's LiDAR-frame z.
inline SparseAltitudeMap project_points(const PointCloud& cloud,
                                        const Calibration& calib, int width,
                                        int height) {
  if (width <= 0 || height <= 0) {
    throw UsageError("project_points: image size must be positive");
  }
  const std::array<double, 12> m = calib.composed();
  if (std::abs(m[8]) + std::abs(m[9]) + std::abs(m[10]) + std::abs(m[11]) == 0.0) {
    throw DataError("degenerate calibration: projective row is zero");
  }
  SparseAltitudeMap map(width, height);
  for (const LidarPoint& p : cloud) {
    const double u = m[0] * p.x + m[1] * p.y + m[2] * p.z + m[3];
    const double v = m[4] * p.x + m[5] * p.y + m[6] * p.z + m[7];
    const double w = m[8] * p.x + m[9] * p.y + m[10] * p.z + m[11];
    if (w <= 0.0) continue;
    const int px = static_cast<int>(std::floor(u / w));
    const int py = static_cast<int>(std::floor(v / w));
    if (px < 0 || px >= width || py < 0 || py >= height) continue;
    AltitudeCell& cell = map.at(px, py);
    if (!cell.occupied || w < cell.depth) {
      cell.occupied = true;
      cell.depth = w;
      cell.altitude = p.z;
    }
  }
  return map;
}

// Altitude difference image: for every occupied pixel, the mean over occupied
// neighbours in the (2r+1)^2 window (centre excluded) of
// |dZ| / euclidean pixel distance. Blank pixels and pixels with no occupied
// neighbour map to 0.
inline AdiImage compute_adi(const SparseAltitudeMap& map, int radius = 2) {
  if (radius < 1) throw UsageError("compute_adi: radius must be >= 1");
  AdiImage adi(map.width, map.height);
  for (int y = 0; y < map.height; ++y) {
    for (int x = 0; x < map.width; ++x) {
      const AltitudeCell& centre = map.at(x, y);
      if (!centre.occupied) continue;
      double sum = 0.0;
      int64_t m = 0;
      const int y_lo = std::max(0, y - radius), y_hi = std::min(map.height - 1, y + radius);
      const int x_lo = std::max(0, x - radius), x_hi = std::min(map.width - 1, x + radius);
      for (int ny = y_lo; ny <= y_hi; ++ny) {
        for (int nx = x_lo; nx <= x_hi; ++nx) {
          if (nx == x && ny == y) continue;
          const AltitudeCell& nb = map.at(nx, ny);
          if (!nb.occupied) continue;
          const double dx = nx - x, dy = ny - y;
          sum += std::abs(centre.altitude - nb.altitude) /
                 std::sqrt(dx * dx + dy * dy);
          ++m;
        }
      }
      adi.at(x, y) = m == 0 ? 0.0 : sum / static_cast<double>(m);
    }
  }
  return adi;
}

// Fills every blank pixel by inverse-distance weighting of its k nearest
// occupied pixels (w = 1/d over Euclidean pixel distance). Ties at equal
// distance resolve to the smaller row-major pixel index. Occupied pixels are
// returned unchanged, so the operation is idempotent.
inline SparseAltitudeMap knn_densify(const SparseAltitudeMap& map, int k = 3) {
  if (k < 1) throw UsageError("knn_densify: k must be >= 1");
  struct Occ {
    int x, y;
    double altitude, depth;
  };
  std::vector<Occ> occ;
  occ.reserve(static_cast<size_t>(map.occupied_count()));
  for (int y = 0; y < map.height; ++y) {
    for (int x = 0; x < map.width; ++x) {
      const AltitudeCell& c = map.at(x, y);
      if (c.occupied) occ.push_back({x, y, c.altitude, c.depth});
    }
  }
  if (static_cast<int64_t>(occ.size()) < k) {
    throw DataError("knn_densify: need at least " + std::to_string(k) +
                    " occupied cells, have " + std::to_string(occ.size()));
  }
  SparseAltitudeMap out = map;
  // (squared distance, insertion index) keeps the row-major tie-break, since
  // occ was gathered in row-major order
  std::vector<std::pair<int64_t, size_t>> best;
  for (int y = 0; y < map.height; ++y) {
    for (int x = 0; x < map.width; ++x) {
      if (map.at(x, y).occupied) continue;
      best.clear();
      for (size_t i = 0; i < occ.size(); ++i) {
        const int64_t dx = occ[i].x - x, dy = occ[i].y - y;
        const int64_t d2 = dx * dx + dy * dy;
        if (static_cast<int>(best.size()) < k) {
          best.emplace_back(d2, i);
          std::push_heap(best.begin(), best.end());
        } else if (std::pair<int64_t, size_t>(d2, i) < best.front()) {
          std::pop_heap(best.begin(), best.end());
          best.back() = {d2, i};
          std::push_heap(best.begin(), best.end());
        }
      }
      double wsum = 0.0, zsum = 0.0, dsum = 0.0;
      for (const auto& [d2, i] : best) {
        const double w = 1.0 / std::sqrt(static_cast<double>(d2));
        wsum += w;
        zsum += w * occ[i].altitude;
        dsum += w * occ[i].depth;
      }
      AltitudeCell& cell = out.at(x, y);
      cell.occupied = true;
      cell.altitude = zsum / wsum;
      cell.depth = dsum / wsum;
    }
  }
  return out;
}

// min(V, clip)/clip into a single-channel float image.
inline Image normalize_adi(const AdiImage& adi, double clip = 2.0) {
  if (clip <= 0) throw UsageError("normalize_adi: clip must be positive");
  Image img(1, adi.height, adi.width);
  for (int y = 0; y < adi.height; ++y) {
    for (int x = 0; x < adi.width; ++x) {
      img.at(0, y, x) = static_cast<float>(std::min(adi.at(x, y), clip) / clip);
    }
  }
  return img;
}

// ---------------------------------------------------------------------------
// File formats
// ---------------------------------------------------------------------------

// Consecutive little-endian float32 (x, y, z, intensity) records, no header.
inline PointCloud read_point_cloud(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open point cloud: " + path.string());
  in.seekg(0, std::ios::end);
  const std::streamoff bytes = in.tellg();
  in.seekg(0);
  if (bytes % 16 != 0) {
    throw DataError("point cloud size not a multiple of 16 bytes: " +
                    path.string());
  }
  PointCloud cloud;
  cloud.reserve(static_cast<size_t>(bytes / 16));
  std::array<float, 4> rec{};
  while (in.read(reinterpret_cast<char*>(rec.data()), 16)) {
    cloud.push_back({rec[0], rec[1], rec[2], rec[3]});
  }
  return cloud;
}

inline void write_point_cloud(const PointCloud& cloud,
                              const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot open for writing: " + path.string());
  for (const LidarPoint& p : cloud) {
    const std::array<float, 4> rec{
        static_cast<float>(p.x), static_cast<float>(p.y),
        static_cast<float>(p.z), static_cast<float>(p.intensity)};
    out.write(reinterpret_cast<const char*>(rec.data()), 16);
  }
  if (!out) throw DataError("write failed: " + path.string());
}

namespace detail {

inline void parse_calib_floats(const std::string& line, const std::string& key,
                               double* dst, int n) {
  std::istringstream is(line.substr(key.size()));
  for (int i = 0; i < n; ++i) {
    if (!(is >> dst[i])) {
      throw DataError("calibration line '" + key + "' needs " +
                      std::to_string(n) + " floats");
    }
  }
}

}  // namespace detail

// Text lines `P2:`, `R0_rect:`, `Tr_velo_to_cam:` with whitespace-separated
// floats (12, 9, 12 respectively).
inline Calibration load_calibration(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open calibration: " + path.string());
  Calibration c;
  bool have_p = false, have_r = false, have_t = false;
  std::string line;
  while (std::getline(in, line)) {
    if (line.rfind("P2:", 0) == 0) {
      detail::parse_calib_floats(line, "P2:", c.proj.data(), 12);
      have_p = true;
    } else if (line.rfind("R0_rect:", 0) == 0) {
      detail::parse_calib_floats(line, "R0_rect:", c.rect.data(), 9);
      have_r = true;
    } else if (line.rfind("Tr_velo_to_cam:", 0) == 0) {
      detail::parse_calib_floats(line, "Tr_velo_to_cam:", c.lidar_to_cam.data(), 12);
      have_t = true;
    }
  }
  if (!have_p || !have_r || !have_t) {
    throw DataError("calibration file missing P2/R0_rect/Tr_velo_to_cam: " +
                    path.string());
  }
  // orthonormality guard on the rectification block
  for (int i = 0; i < 3; ++i) {
    for (int j = 0; j < 3; ++j) {
      double dot = 0;
      for (int k = 0; k < 3; ++k) {
        dot += c.rect[static_cast<size_t>(i * 3 + k)] *
               c.rect[static_cast<size_t>(j * 3 + k)];
      }
      if (std::abs(dot - (i == j ? 1.0 : 0.0)) > 1e-4) {
        throw DataError("rectification matrix is not orthonormal: " +
                        path.string());
      }
    }
  }
  return c;
}

inline void save_calibration(const Calibration& c,
                             const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw DataError("cannot open for writing: " + path.string());
  out.precision(17);
  out << "P2:";
  for (double v : c.proj) out << ' ' << v;
  out << "\nR0_rect:";
  for (double v : c.rect) out << ' ' << v;
  out << "\nTr_velo_to_cam:";
  for (double v : c.lidar_to_cam) out << ' ' << v;
  out << "\n";
  if (!out) throw DataError("write failed: " + path.string());
}

}  // namespace skipcross
