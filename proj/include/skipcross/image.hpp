#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include "skipcross/errors.hpp"

namespace skipcross {

// Planar float image, [channel][row][col], values conventionally in [0,1].
struct Image {
  int channels = 0;
  int height = 0;
  int width = 0;
  std::vector<float> data;

  Image() = default;
  Image(int c, int h, int w, float fill = 0.0f)
      : channels(c), height(h), width(w),
        data(static_cast<size_t>(c) * h * w, fill) {
    if (c <= 0 || h <= 0 || w <= 0) {
      throw ShapeError("image dimensions must be positive");
    }
  }

  float& at(int c, int y, int x) {
    return data[(static_cast<size_t>(c) * height + y) * width + x];
  }
  float at(int c, int y, int x) const {
    return data[(static_cast<size_t>(c) * height + y) * width + x];
  }
  int64_t pixels() const { return static_cast<int64_t>(height) * width; }
};

// Binary mask, row-major, values 0/1.
struct Mask {
  int height = 0;
  int width = 0;
  std::vector<uint8_t> data;

  Mask() = default;
  Mask(int h, int w, uint8_t fill = 0)
      : height(h), width(w), data(static_cast<size_t>(h) * w, fill) {
    if (h <= 0 || w <= 0) throw ShapeError("mask dimensions must be positive");
  }

  uint8_t& at(int y, int x) {
    return data[static_cast<size_t>(y) * width + x];
  }
  uint8_t at(int y, int x) const {
    return data[static_cast<size_t>(y) * width + x];
  }
  int64_t pixels() const { return static_cast<int64_t>(height) * width; }
};

namespace detail {

inline uint8_t quantize8(float v) {
  const float c = std::clamp(v, 0.0f, 1.0f);
  return static_cast<uint8_t>(std::lround(c * 255.0f));
}

// Reads one whitespace-delimited token, skipping '#' comments.
inline std::string next_pnm_token(std::istream& in) {
  std::string tok;
  int ch;
  while ((ch = in.get()) != EOF) {
    if (ch == '#') {
      while ((ch = in.get()) != EOF && ch != '\n') {
      }
    } else if (!std::isspace(ch)) {
      tok.push_back(static_cast<char>(ch));
      while ((ch = in.peek()) != EOF && !std::isspace(ch) && ch != '#') {
        tok.push_back(static_cast<char>(in.get()));
      }
      return tok;
    }
  }
  throw DataError("unexpected end of PNM header");
}

inline int parse_pnm_int(std::istream& in, const char* what) {
  const std::string tok = next_pnm_token(in);
  try {
    size_t pos = 0;
    const int v = std::stoi(tok, &pos);
    if (pos != tok.size() || v <= 0) throw std::invalid_argument(tok);
    return v;
  } catch (const std::exception&) {
    throw DataError(std::string("bad PNM ") + what + ": '" + tok + "'");
  }
}

}  // namespace detail

// Binary PGM (P5, 1 channel) or PPM (P6, 3 channels), maxval 255.
inline void write_image(const Image& img, const std::filesystem::path& path) {
  if (img.channels != 1 && img.channels != 3) {
    throw UsageError("write_image supports 1 or 3 channels, got " +
                     std::to_string(img.channels));
  }
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot open for writing: " + path.string());
  out << (img.channels == 1 ? "P5" : "P6") << "\n"
      << img.width << " " << img.height << "\n255\n";
  std::vector<uint8_t> row(static_cast<size_t>(img.width) * img.channels);
  for (int y = 0; y < img.height; ++y) {
    for (int x = 0; x < img.width; ++x) {
      for (int c = 0; c < img.channels; ++c) {
        row[static_cast<size_t>(x) * img.channels + c] =
            detail::quantize8(img.at(c, y, x));
      }
    }
    out.write(reinterpret_cast<const char*>(row.data()),
              static_cast<std::streamsize>(row.size()));
  }
  if (!out) throw DataError("write failed: " + path.string());
}

inline Image read_image(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open: " + path.string());
  char m0 = 0, m1 = 0;
  in.get(m0).get(m1);
  int channels;
  if (m0 == 'P' && m1 == '5') channels = 1;
  else if (m0 == 'P' && m1 == '6') channels = 3;
  else throw DataError("not a binary PGM/PPM file: " + path.string());
  const int w = detail::parse_pnm_int(in, "width");
  const int h = detail::parse_pnm_int(in, "height");
  const int maxval = detail::parse_pnm_int(in, "maxval");
  if (maxval != 255) {
    throw DataError("unsupported PNM maxval " + std::to_string(maxval) +
                    " in " + path.string());
  }
  in.get();  // single whitespace after maxval
  Image img(channels, h, w);
  std::vector<uint8_t> row(static_cast<size_t>(w) * channels);
  for (int y = 0; y < h; ++y) {
    in.read(reinterpret_cast<char*>(row.data()),
            static_cast<std::streamsize>(row.size()));
    if (in.gcount() != static_cast<std::streamsize>(row.size())) {
      throw DataError("truncated PNM payload: " + path.string());
    }
    for (int x = 0; x < w; ++x) {
      for (int c = 0; c < channels; ++c) {
        img.at(c, y, x) =
            static_cast<float>(row[static_cast<size_t>(x) * channels + c]) /
            255.0f;
      }
    }
  }
  return img;
}

inline void write_mask(const Mask& mask, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot open for writing: " + path.string());
  out << "P5\n" << mask.width << " " << mask.height << "\n255\n";
  std::vector<uint8_t> row(static_cast<size_t>(mask.width));
  for (int y = 0; y < mask.height; ++y) {
    for (int x = 0; x < mask.width; ++x) {
      const uint8_t v = mask.at(y, x);
      if (v > 1) throw DataError("write_mask: values must be 0/1");
      row[static_cast<size_t>(x)] = v ? 255 : 0;
    }
    out.write(reinterpret_cast<const char*>(row.data()),
              static_cast<std::streamsize>(row.size()));
  }
  if (!out) throw DataError("write failed: " + path.string());
}

inline Mask read_mask(const std::filesystem::path& path) {
  const Image img = read_image(path);
  if (img.channels != 1) {
    throw DataError("mask file must be single-channel PGM: " + path.string());
  }
  Mask m(img.height, img.width);
  for (int y = 0; y < img.height; ++y) {
    for (int x = 0; x < img.width; ++x) {
      const float v = img.at(0, y, x);
      if (v != 0.0f && v != 1.0f) {
        throw DataError("mask pixels must be 0 or 255: " + path.string());
      }
      m.at(y, x) = v == 1.0f ? 1 : 0;
    }
  }
  return m;
}

// Bilinear resize with half-pixel-centre source mapping.
inline Image resize_bilinear(const Image& src, int out_h, int out_w) {
  if (out_h <= 0 || out_w <= 0) throw ShapeError("resize: bad target size");
  if (out_h == src.height && out_w == src.width) return src;
  Image dst(src.channels, out_h, out_w);
  const double sy = static_cast<double>(src.height) / out_h;
  const double sx = static_cast<double>(src.width) / out_w;
  for (int y = 0; y < out_h; ++y) {
    const double fy = std::clamp((y + 0.5) * sy - 0.5, 0.0,
                                 static_cast<double>(src.height - 1));
    const int y0 = static_cast<int>(fy);
    const int y1 = std::min(y0 + 1, src.height - 1);
    const double wy = fy - y0;
    for (int x = 0; x < out_w; ++x) {
      const double fx = std::clamp((x + 0.5) * sx - 0.5, 0.0,
                                   static_cast<double>(src.width - 1));
      const int x0 = static_cast<int>(fx);
      const int x1 = std::min(x0 + 1, src.width - 1);
      const double wx = fx - x0;
      for (int c = 0; c < src.channels; ++c) {
        const double top = (1 - wx) * src.at(c, y0, x0) + wx * src.at(c, y0, x1);
        const double bot = (1 - wx) * src.at(c, y1, x0) + wx * src.at(c, y1, x1);
        dst.at(c, y, x) = static_cast<float>((1 - wy) * top + wy * bot);
      }
    }
  }
  return dst;
}

namespace detail {

inline int nearest_index(int dst, int dst_extent, int src_extent) {
  const double f =
      (dst + 0.5) * static_cast<double>(src_extent) / dst_extent - 0.5;
  return std::clamp(static_cast<int>(std::lround(f)), 0, src_extent - 1);
}

}  // namespace detail

inline Image resize_nearest(const Image& src, int out_h, int out_w) {
  if (out_h <= 0 || out_w <= 0) throw ShapeError("resize: bad target size");
  if (out_h == src.height && out_w == src.width) return src;
  Image dst(src.channels, out_h, out_w);
  for (int y = 0; y < out_h; ++y) {
    const int sy = detail::nearest_index(y, out_h, src.height);
    for (int x = 0; x < out_w; ++x) {
      const int sx = detail::nearest_index(x, out_w, src.width);
      for (int c = 0; c < src.channels; ++c) dst.at(c, y, x) = src.at(c, sy, sx);
    }
  }
  return dst;
}

inline Mask resize_nearest(const Mask& src, int out_h, int out_w) {
  if (out_h <= 0 || out_w <= 0) throw ShapeError("resize: bad target size");
  if (out_h == src.height && out_w == src.width) return src;
  Mask dst(out_h, out_w);
  for (int y = 0; y < out_h; ++y) {
    const int sy = detail::nearest_index(y, out_h, src.height);
    for (int x = 0; x < out_w; ++x) {
      dst.at(y, x) = src.at(sy, detail::nearest_index(x, out_w, src.width));
    }
  }
  return dst;
}

}  // namespace skipcross
