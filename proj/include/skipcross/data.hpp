#pragma once

#include <algorithm>
#include <filesystem>
#include <iostream>
#include <string>
#include <vector>

#include "skipcross/errors.hpp"
#include "skipcross/geometry.hpp"
#include "skipcross/image.hpp"

namespace skipcross {

// One aligned training/evaluation example: color image, normalized altitude
// difference image, and the binary road mask, all at the same size.
struct Sample {
  Image rgb;  // [3,H,W], values in [0,1]
  Image adi;  // [1,H,W], values in [0,1]
  Mask mask;  // [H,W], values {0,1}
  std::string id;

  int height() const { return rgb.height; }
  int width() const { return rgb.width; }

  void validate() const {
    if (rgb.channels != 3 || adi.channels != 1) {
      throw ShapeError("sample '" + id + "': rgb must have 3 channels and adi 1");
    }
    if (adi.height != rgb.height || adi.width != rgb.width ||
        mask.height != rgb.height || mask.width != rgb.width) {
      throw ShapeError("sample '" + id + "': rgb, adi and mask sizes differ");
    }
    if (rgb.height % 16 != 0 || rgb.width % 16 != 0) {
      throw ShapeError("sample '" + id + "': extents must be divisible by 16");
    }
  }
};

struct ManifestEntry {
  std::string id;
  std::filesystem::path image;
  std::filesystem::path cloud;
  std::filesystem::path calib;
  std::filesystem::path label;
};

struct DatasetManifest {
  std::filesystem::path root;
  std::vector<ManifestEntry> entries;

  size_t size() const { return entries.size(); }
};

// Scans a KITTI-layout directory (image_2/, velodyne/, calib/, gt_image_2/)
// and pairs files by stem. Stems missing any counterpart are skipped with a
// warning on stderr; an empty result is an error.
inline DatasetManifest load_manifest(const std::filesystem::path& root,
                                     std::ostream& warnings = std::cerr) {
  namespace fs = std::filesystem;
  const fs::path image_dir = root / "image_2";
  const fs::path cloud_dir = root / "velodyne";
  const fs::path calib_dir = root / "calib";
  const fs::path label_dir = root / "gt_image_2";
  if (!fs::is_directory(image_dir)) {
    throw DataError("no image_2/ directory under '" + root.string() + "'");
  }

  std::vector<std::string> stems;
  for (const auto& de : fs::directory_iterator(image_dir)) {
    if (de.is_regular_file() && de.path().extension() == ".ppm") {
      stems.push_back(de.path().stem().string());
    }
  }
  std::sort(stems.begin(), stems.end());

  DatasetManifest manifest;
  manifest.root = root;
  for (const std::string& stem : stems) {
    ManifestEntry e;
    e.id = stem;
    e.image = image_dir / (stem + ".ppm");
    e.cloud = cloud_dir / (stem + ".bin");
    e.calib = calib_dir / (stem + ".txt");
    e.label = label_dir / (stem + ".ppm");
    bool complete = true;
    for (const fs::path* p : {&e.cloud, &e.calib, &e.label}) {
      if (!fs::is_regular_file(*p)) {
        warnings << "skipping '" << stem << "': missing " << p->string()
                 << "\n";
        complete = false;
      }
    }
    if (complete) manifest.entries.push_back(std::move(e));
  }
  if (manifest.entries.empty()) {
    throw DataError("no complete samples under '" + root.string() + "'");
  }
  return manifest;
}

// Knobs for turning a projected point cloud into the network's second input.
// knn_k = 0 skips densification and leaves unoccupied cells at zero.
struct AdiParams {
  int radius = 2;
  double clip = 2.0;
  int knn_k = 3;
};

namespace detail {

// Road is whichever pixels light up the label's distinguishing channel: the
// blue channel for color labels (road magenta vs background red), plain
// intensity for grayscale ones.
inline Mask binarize_label(const Image& label) {
  const int ch = label.channels == 3 ? 2 : 0;
  Mask mask(label.height, label.width);
  for (int y = 0; y < label.height; ++y) {
    for (int x = 0; x < label.width; ++x) {
      mask.at(y, x) = label.at(ch, y, x) > 127.0f / 255.0f ? 1 : 0;
    }
  }
  return mask;
}

}  // namespace detail

// Rescales the projective row/column scales of P when the image the
// calibration was measured on is resized to a new resolution.
inline Calibration scale_calibration(Calibration calib, int orig_w, int orig_h,
                                     int new_w, int new_h) {
  const double sx = static_cast<double>(new_w) / orig_w;
  const double sy = static_cast<double>(new_h) / orig_h;
  for (int c = 0; c < 4; ++c) {
    calib.proj[0 * 4 + c] *= sx;
    calib.proj[1 * 4 + c] *= sy;
  }
  return calib;
}

inline Image adi_from_cloud(const PointCloud& cloud, const Calibration& calib,
                            int width, int height, const AdiParams& params) {
  SparseAltitudeMap map = project_points(cloud, calib, width, height);
  if (params.knn_k > 0) {
    if (map.occupied_count() == 0) {
      throw DataError("no points project into the image; cannot densify");
    }
    // fewer occupied cells than requested neighbors: interpolate from all
    const int k = static_cast<int>(
        std::min<int64_t>(params.knn_k, map.occupied_count()));
    map = knn_densify(map, k);
  }
  return normalize_adi(compute_adi(map, params.radius), params.clip);
}

inline Sample load_sample(const ManifestEntry& entry, int target_h,
                          int target_w, const AdiParams& params = {}) {
  if (target_h % 16 != 0 || target_w % 16 != 0 || target_h <= 0 ||
      target_w <= 0) {
    throw UsageError("target size must be positive and divisible by 16");
  }
  Sample s;
  s.id = entry.id;

  Image rgb = read_image(entry.image);
  if (rgb.channels != 3) {
    throw DataError("'" + entry.image.string() + "' is not a color image");
  }
  const int orig_h = rgb.height, orig_w = rgb.width;
  s.rgb = resize_bilinear(rgb, target_h, target_w);

  Calibration calib = scale_calibration(load_calibration(entry.calib), orig_w,
                                        orig_h, target_w, target_h);
  s.adi = adi_from_cloud(read_point_cloud(entry.cloud), calib, target_w,
                         target_h, params);

  Image label = read_image(entry.label);
  s.mask = detail::binarize_label(resize_nearest(label, target_h, target_w));

  s.validate();
  return s;
}

}  // namespace skipcross
