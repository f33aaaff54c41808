#pragma once

#include <array>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "skipcross/data.hpp"
#include "skipcross/geometry.hpp"
#include "skipcross/image.hpp"
#include "skipcross/rng.hpp"

namespace skipcross {

// World frame: x forward, y left, z up, ground plane z = 0. The sensor rig
// (camera and LiDAR co-located) sits at (0, 0, kSensorHeight) looking along
// +x. The LiDAR frame is the world frame translated to the sensor origin.
inline constexpr double kSensorHeight = 1.7;

struct ObstacleBox {
  double x0, x1;  // footprint extents along world x (forward)
  double y0, y1;  // footprint extents along world y (left)
  double height;  // top at z = height, base on the ground
};

using RoadQuad = std::array<std::array<double, 2>, 4>;  // (x, y) corners, CCW

struct SceneSpec {
  RoadQuad road = {{{4.0, 3.5}, {4.0, -3.5}, {40.0, -2.0}, {40.0, 2.0}}};
  std::vector<ObstacleBox> obstacles = {
      {14.0, 16.0, 4.0, 6.0, 1.5},
      {24.0, 26.5, -7.0, -4.5, 2.2},
  };
  int lidar_lines = 16;
  double jitter_sigma = 0.02;  // range noise along each beam, meters
  bool brightness_corruption = false;
  uint64_t seed = 1;
  int image_width = 64;
  int image_height = 64;
  // vary road shape and obstacle placement per sample (base layout otherwise)
  bool randomize_layout = true;
  double rgb_noise = 0.02;

  void validate() const {
    if (image_width % 16 != 0 || image_height % 16 != 0 || image_width <= 0 ||
        image_height <= 0) {
      throw ConfigError("scene image size must be positive and divisible by 16");
    }
    if (lidar_lines < 1) throw ConfigError("lidar_lines must be >= 1");
    if (jitter_sigma < 0 || rgb_noise < 0) {
      throw ConfigError("noise magnitudes must be non-negative");
    }
    for (const ObstacleBox& b : obstacles) {
      if (b.height <= 0 || b.x1 <= b.x0 || b.y1 <= b.y0) {
        throw ConfigError("obstacle boxes need positive extents and height");
      }
    }
    double area2 = 0;  // shoelace; zero means a degenerate road polygon
    for (int i = 0; i < 4; ++i) {
      const auto& a = road[static_cast<size_t>(i)];
      const auto& b = road[static_cast<size_t>((i + 1) % 4)];
      area2 += a[0] * b[1] - b[0] * a[1];
    }
    if (std::abs(area2) < 1e-9) throw ConfigError("road polygon is degenerate");
  }
};

struct SyntheticScene {
  Image rgb;   // [3,H,W] rendered view
  Mask mask;   // road pixels (first hit on the road surface)
  PointCloud cloud;
  Calibration calib;
  RoadQuad road;                      // realized layout for this sample
  std::vector<ObstacleBox> obstacles;
};

inline bool point_in_road(const RoadQuad& road, double x, double y) {
  // convex CCW polygon: inside iff never strictly right of an edge
  for (int i = 0; i < 4; ++i) {
    const auto& a = road[static_cast<size_t>(i)];
    const auto& b = road[static_cast<size_t>((i + 1) % 4)];
    const double cross =
        (b[0] - a[0]) * (y - a[1]) - (b[1] - a[1]) * (x - a[0]);
    if (cross < 0) return false;
  }
  return true;
}

inline Calibration make_scene_calibration(int width, int height) {
  Calibration c;
  const double f = width / 2.0;
  c.proj = {f, 0, width / 2.0, 0, 0, f, height / 2.0, 0, 0, 0, 1, 0};
  c.rect = {1, 0, 0, 0, 1, 0, 0, 0, 1};
  // lidar (x fwd, y left, z up) -> camera (x right, y down, z forward)
  c.lidar_to_cam = {0, -1, 0, 0, 0, 0, -1, 0, 1, 0, 0, 0};
  return c;
}

namespace detail {

struct Vec3 {
  double x, y, z;
};

struct RayHit {
  double t;
  int what;  // -1 ground, >= 0 obstacle index
};

inline std::optional<double> ray_ground(const Vec3& o, const Vec3& d) {
  if (d.z >= -1e-12) return std::nullopt;
  const double t = -o.z / d.z;
  return t > 1e-9 ? std::optional<double>(t) : std::nullopt;
}

inline std::optional<double> ray_box(const Vec3& o, const Vec3& d,
                                     const ObstacleBox& b) {
  double tmin = 1e-9, tmax = 1e30;
  const double lo[3] = {b.x0, b.y0, 0.0};
  const double hi[3] = {b.x1, b.y1, b.height};
  const double oc[3] = {o.x, o.y, o.z};
  const double dc[3] = {d.x, d.y, d.z};
  for (int a = 0; a < 3; ++a) {
    if (std::abs(dc[a]) < 1e-12) {
      if (oc[a] < lo[a] || oc[a] > hi[a]) return std::nullopt;
      continue;
    }
    double t0 = (lo[a] - oc[a]) / dc[a];
    double t1 = (hi[a] - oc[a]) / dc[a];
    if (t0 > t1) std::swap(t0, t1);
    tmin = std::max(tmin, t0);
    tmax = std::min(tmax, t1);
    if (tmin > tmax) return std::nullopt;
  }
  return tmin;
}

inline std::optional<RayHit> raycast(const Vec3& o, const Vec3& d,
                                     const std::vector<ObstacleBox>& boxes) {
  std::optional<RayHit> best;
  if (auto t = ray_ground(o, d)) best = RayHit{*t, -1};
  for (size_t i = 0; i < boxes.size(); ++i) {
    if (auto t = ray_box(o, d, boxes[i])) {
      if (!best || *t < best->t) best = RayHit{*t, static_cast<int>(i)};
    }
  }
  return best;
}

inline RoadQuad randomized_road(Rng& rng) {
  const double near_half = 2.5 + 2.0 * rng.uniform();
  const double far_half = 1.5 + 1.5 * rng.uniform();
  const double shift = 2.0 * rng.uniform() - 1.0;
  return {{{4.0, shift + near_half},
           {4.0, shift - near_half},
           {40.0, shift - far_half},
           {40.0, shift + far_half}}};
}

inline std::vector<ObstacleBox> randomized_obstacles(Rng& rng) {
  const int count = 1 + static_cast<int>(rng.uniform_int(3));
  std::vector<ObstacleBox> boxes;
  for (int i = 0; i < count; ++i) {
    const double cx = 8.0 + 27.0 * rng.uniform();
    const double cy = -6.0 + 12.0 * rng.uniform();
    const double wx = 0.5 + 1.0 * rng.uniform();
    const double wy = 0.5 + 1.0 * rng.uniform();
    const double h = 0.8 + 1.7 * rng.uniform();
    boxes.push_back({cx - wx, cx + wx, cy - wy, cy + wy, h});
  }
  return boxes;
}

}  // namespace detail

// Renders one scene. All randomness comes from `rng` in a fixed draw order:
// layout, obstacle colors, pixel noise, brightness factor, lidar beams.
inline SyntheticScene synth_scene(const SceneSpec& spec, Rng& rng) {
  spec.validate();
  using detail::Vec3;

  SyntheticScene scene;
  scene.calib = make_scene_calibration(spec.image_width, spec.image_height);
  if (spec.randomize_layout) {
    scene.road = detail::randomized_road(rng);
    scene.obstacles = detail::randomized_obstacles(rng);
  } else {
    scene.road = spec.road;
    scene.obstacles = spec.obstacles;
  }

  std::vector<std::array<float, 3>> box_colors;
  for (size_t i = 0; i < scene.obstacles.size(); ++i) {
    box_colors.push_back({static_cast<float>(0.2 + 0.7 * rng.uniform()),
                          static_cast<float>(0.2 + 0.7 * rng.uniform()),
                          static_cast<float>(0.2 + 0.7 * rng.uniform())});
  }

  const int w = spec.image_width, h = spec.image_height;
  const double f = w / 2.0, cx = w / 2.0, cy = h / 2.0;
  const Vec3 origin{0.0, 0.0, kSensorHeight};
  constexpr float kSky[3] = {0.55f, 0.70f, 0.90f};
  constexpr float kGround[3] = {0.35f, 0.50f, 0.30f};
  constexpr float kRoad[3] = {0.40f, 0.40f, 0.42f};

  scene.rgb = Image(3, h, w);
  scene.mask = Mask(h, w);
  for (int v = 0; v < h; ++v) {
    for (int u = 0; u < w; ++u) {
      // camera ray through the pixel center, camera frame -> world frame
      const double rx = (u + 0.5 - cx) / f;
      const double ry = (v + 0.5 - cy) / f;
      const Vec3 dir{1.0, -rx, -ry};
      const float* color = kSky;
      if (auto hit = detail::raycast(origin, dir, scene.obstacles)) {
        if (hit->what >= 0) {
          color = box_colors[static_cast<size_t>(hit->what)].data();
        } else {
          const double gx = origin.x + hit->t * dir.x;
          const double gy = origin.y + hit->t * dir.y;
          const bool on_road = point_in_road(scene.road, gx, gy);
          color = on_road ? kRoad : kGround;
          scene.mask.at(v, u) = on_road ? 1 : 0;
        }
      }
      for (int c = 0; c < 3; ++c) scene.rgb.at(c, v, u) = color[c];
    }
  }

  if (spec.rgb_noise > 0) {
    for (float& p : scene.rgb.data) {
      p = std::clamp(
          p + static_cast<float>(rng.normal() * spec.rgb_noise), 0.0f, 1.0f);
    }
  }
  if (spec.brightness_corruption) {
    const float factor = static_cast<float>(0.3 + 0.4 * rng.uniform());
    for (float& p : scene.rgb.data) p = std::clamp(p * factor, 0.0f, 1.0f);
  }

  // beam fan: lidar_lines elevation rings sweeping the camera's field of view
  constexpr double kDeg = 3.14159265358979323846 / 180.0;
  const int azimuth_steps = 172;
  for (int line = 0; line < spec.lidar_lines; ++line) {
    const double elev =
        spec.lidar_lines == 1
            ? -10.0 * kDeg
            : (-2.0 - 18.0 * line / (spec.lidar_lines - 1)) * kDeg;
    for (int a = 0; a < azimuth_steps; ++a) {
      const double az = (-43.0 + 86.0 * a / (azimuth_steps - 1)) * kDeg;
      const Vec3 dir{std::cos(elev) * std::cos(az),
                     std::cos(elev) * std::sin(az), std::sin(elev)};
      auto hit = detail::raycast(origin, dir, scene.obstacles);
      if (!hit) continue;
      const double t = hit->t + rng.normal() * spec.jitter_sigma;
      if (t < 0.1 || t > 80.0) continue;
      LidarPoint p;
      p.x = origin.x + t * dir.x;
      p.y = origin.y + t * dir.y;
      p.z = origin.z + t * dir.z - kSensorHeight;  // into the lidar frame
      p.intensity = 0.3 + 0.7 * rng.uniform();
      scene.cloud.push_back(p);
    }
  }
  return scene;
}

inline std::vector<SyntheticScene> synth_generate(const SceneSpec& spec,
                                                  int n) {
  if (n < 1) throw UsageError("need at least one sample");
  std::vector<SyntheticScene> scenes;
  scenes.reserve(static_cast<size_t>(n));
  for (int i = 0; i < n; ++i) {
    Rng rng(mix_seed(spec.seed, static_cast<uint64_t>(i)));
    scenes.push_back(synth_scene(spec, rng));
  }
  return scenes;
}

inline Sample scene_to_sample(const SyntheticScene& scene,
                              const std::string& id,
                              const AdiParams& params = {}) {
  Sample s;
  s.id = id;
  s.rgb = scene.rgb;
  s.adi = adi_from_cloud(scene.cloud, scene.calib, scene.rgb.width,
                         scene.rgb.height, params);
  s.mask = scene.mask;
  s.validate();
  return s;
}

// Writes scenes in the directory layout the manifest loader expects. Labels
// use the road-benchmark color convention: road magenta, background red.
inline void write_synth_dataset(const SceneSpec& spec, int n,
                                const std::filesystem::path& root) {
  namespace fs = std::filesystem;
  fs::create_directories(root / "image_2");
  fs::create_directories(root / "velodyne");
  fs::create_directories(root / "calib");
  fs::create_directories(root / "gt_image_2");

  const std::vector<SyntheticScene> scenes = synth_generate(spec, n);
  for (int i = 0; i < n; ++i) {
    char stem[16];
    std::snprintf(stem, sizeof(stem), "%06d", i);
    const SyntheticScene& scene = scenes[static_cast<size_t>(i)];
    write_image(scene.rgb, root / "image_2" / (std::string(stem) + ".ppm"));
    write_point_cloud(scene.cloud,
                      root / "velodyne" / (std::string(stem) + ".bin"));
    save_calibration(scene.calib,
                     root / "calib" / (std::string(stem) + ".txt"));
    Image label(3, scene.mask.height, scene.mask.width);
    for (int y = 0; y < label.height; ++y) {
      for (int x = 0; x < label.width; ++x) {
        const bool road = scene.mask.at(y, x) != 0;
        label.at(0, y, x) = 1.0f;
        label.at(1, y, x) = 0.0f;
        label.at(2, y, x) = road ? 1.0f : 0.0f;
      }
    }
    write_image(label, root / "gt_image_2" / (std::string(stem) + ".ppm"));
  }
}

}  // namespace skipcross
