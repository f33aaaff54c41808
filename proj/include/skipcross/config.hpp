#pragma once

#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "skipcross/data.hpp"
#include "skipcross/model.hpp"
#include "skipcross/synth.hpp"
#include "skipcross/train.hpp"

namespace skipcross {

// One parsed `key = value` line, tagged with its [section].
struct IniEntry {
  std::string section;
  std::string key;
  std::string value;
};

namespace detail {

inline std::string trim(const std::string& s) {
  const size_t a = s.find_first_not_of(" \t\r");
  if (a == std::string::npos) return "";
  const size_t b = s.find_last_not_of(" \t\r");
  return s.substr(a, b - a + 1);
}

inline bool parse_bool(const std::string& v, const std::string& key) {
  if (v == "true" || v == "1" || v == "yes" || v == "on") return true;
  if (v == "false" || v == "0" || v == "no" || v == "off") return false;
  throw ConfigError("key '" + key + "': expected a boolean, got '" + v + "'");
}

inline int64_t parse_int(const std::string& v, const std::string& key) {
  size_t used = 0;
  int64_t out = 0;
  try {
    out = std::stoll(v, &used);
  } catch (const std::exception&) {
    throw ConfigError("key '" + key + "': expected an integer, got '" + v + "'");
  }
  if (used != v.size()) {
    throw ConfigError("key '" + key + "': trailing characters in '" + v + "'");
  }
  return out;
}

inline double parse_float(const std::string& v, const std::string& key) {
  size_t used = 0;
  double out = 0;
  try {
    out = std::stod(v, &used);
  } catch (const std::exception&) {
    throw ConfigError("key '" + key + "': expected a number, got '" + v + "'");
  }
  if (used != v.size()) {
    throw ConfigError("key '" + key + "': trailing characters in '" + v + "'");
  }
  return out;
}

inline std::vector<int> parse_int_list(const std::string& v,
                                       const std::string& key) {
  std::vector<int> out;
  std::string item;
  std::istringstream is(v);
  while (std::getline(is, item, ',')) {
    out.push_back(static_cast<int>(parse_int(trim(item), key)));
  }
  if (out.empty()) throw ConfigError("key '" + key + "': empty list");
  return out;
}

inline std::string format_float(double v) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

inline std::string format_int_list(const std::vector<int>& v) {
  std::string out;
  for (size_t i = 0; i < v.size(); ++i) {
    if (i) out += ",";
    out += std::to_string(v[i]);
  }
  return out;
}

}  // namespace detail

// `[section]` headers and `key = value` lines; `#` or `;` start a comment.
inline std::vector<IniEntry> parse_ini(const std::string& text) {
  std::vector<IniEntry> entries;
  std::istringstream in(text);
  std::string line, section;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    const size_t comment = line.find_first_of("#;");
    if (comment != std::string::npos) line = line.substr(0, comment);
    line = detail::trim(line);
    if (line.empty()) continue;
    if (line.front() == '[') {
      if (line.back() != ']' || line.size() < 3) {
        throw ConfigError("line " + std::to_string(lineno) +
                          ": malformed section header '" + line + "'");
      }
      section = detail::trim(line.substr(1, line.size() - 2));
      continue;
    }
    const size_t eq = line.find('=');
    if (eq == std::string::npos) {
      throw ConfigError("line " + std::to_string(lineno) +
                        ": expected 'key = value', got '" + line + "'");
    }
    IniEntry e;
    e.section = section;
    e.key = detail::trim(line.substr(0, eq));
    e.value = detail::trim(line.substr(eq + 1));
    if (e.key.empty()) {
      throw ConfigError("line " + std::to_string(lineno) + ": empty key");
    }
    entries.push_back(std::move(e));
  }
  return entries;
}

// Everything one run needs: output location, data roots, topology, projection
// knobs, the training schedule, and the synthetic-scene recipe. Unknown keys
// are rejected so typos cannot silently fall back to defaults.
struct RunConfig {
  // [run]
  std::string out = "out";
  uint64_t seed = 1;
  FusionStrategy strategy = FusionStrategy::skipcross;

  // [data]
  std::string train_root;
  std::string val_root;
  int height = 64;
  int width = 64;

  // [model]
  std::vector<int> stage_blocks = {2, 3, 3};
  std::vector<int> stage_channels = {32, 64, 128};
  int rgb_channels = 3;
  int lidar_channels = 1;
  bool decoder_fusion = true;

  // [adi]
  AdiParams adi;

  // [train]
  TrainConfig train;

  // [synth]
  int synth_count = 16;
  SceneSpec synth;

  FusionTopology topology() const {
    FusionTopology base;
    base.stage_blocks = stage_blocks;
    base.stage_channels = stage_channels;
    base.rgb_in_channels = rgb_channels;
    base.lidar_in_channels = lidar_channels;
    FusionTopology topo = configure_strategy(strategy, base);
    if (!decoder_fusion) topo.decoder_fusion_enabled = false;
    topo.validate();
    return topo;
  }

  void validate() const {
    topology();
    train.validate();
    if (adi.radius < 1) throw ConfigError("adi radius must be >= 1");
    if (adi.clip <= 0) throw ConfigError("adi clip must be positive");
    if (adi.knn_k < 0) throw ConfigError("adi knn_k must be >= 0");
    if (height % 16 != 0 || width % 16 != 0 || height <= 0 || width <= 0) {
      throw ConfigError("data height/width must be positive multiples of 16");
    }
    if (synth_count < 1) throw ConfigError("synth count must be >= 1");
    synth.validate();
  }

  static RunConfig from_ini(const std::string& text);
  std::string to_ini() const;
};

inline RunConfig RunConfig::from_ini(const std::string& text) {
  RunConfig c;
  using detail::parse_bool;
  using detail::parse_float;
  using detail::parse_int;
  using detail::parse_int_list;

  for (const IniEntry& e : parse_ini(text)) {
    const std::string where = "[" + e.section + "] " + e.key;
    if (e.section == "run") {
      if (e.key == "out") c.out = e.value;
      else if (e.key == "seed") c.seed = static_cast<uint64_t>(parse_int(e.value, where));
      else if (e.key == "strategy") c.strategy = parse_strategy(e.value);
      else throw ConfigError("unknown key " + where);
    } else if (e.section == "data") {
      if (e.key == "train_root") c.train_root = e.value;
      else if (e.key == "val_root") c.val_root = e.value;
      else if (e.key == "height") c.height = static_cast<int>(parse_int(e.value, where));
      else if (e.key == "width") c.width = static_cast<int>(parse_int(e.value, where));
      else throw ConfigError("unknown key " + where);
    } else if (e.section == "model") {
      if (e.key == "stage_blocks") c.stage_blocks = parse_int_list(e.value, where);
      else if (e.key == "stage_channels") c.stage_channels = parse_int_list(e.value, where);
      else if (e.key == "rgb_channels") c.rgb_channels = static_cast<int>(parse_int(e.value, where));
      else if (e.key == "lidar_channels") c.lidar_channels = static_cast<int>(parse_int(e.value, where));
      else if (e.key == "decoder_fusion") c.decoder_fusion = parse_bool(e.value, where);
      else throw ConfigError("unknown key " + where);
    } else if (e.section == "adi") {
      if (e.key == "radius") c.adi.radius = static_cast<int>(parse_int(e.value, where));
      else if (e.key == "clip") c.adi.clip = parse_float(e.value, where);
      else if (e.key == "knn_k") c.adi.knn_k = static_cast<int>(parse_int(e.value, where));
      else throw ConfigError("unknown key " + where);
    } else if (e.section == "train") {
      if (e.key == "lr") c.train.lr = static_cast<float>(parse_float(e.value, where));
      else if (e.key == "batch_size") c.train.batch_size = static_cast<int>(parse_int(e.value, where));
      else if (e.key == "max_epochs") c.train.max_epochs = static_cast<int>(parse_int(e.value, where));
      else if (e.key == "plateau_patience") c.train.plateau_patience = static_cast<int>(parse_int(e.value, where));
      else if (e.key == "lr_decay") c.train.lr_decay = static_cast<float>(parse_float(e.value, where));
      else if (e.key == "min_lr") c.train.min_lr = static_cast<float>(parse_float(e.value, where));
      else if (e.key == "augment_multiscale") c.train.augment_multiscale = parse_bool(e.value, where);
      else if (e.key == "augment_crop") c.train.augment_crop = parse_bool(e.value, where);
      else if (e.key == "augment_brightness") c.train.augment_brightness = parse_bool(e.value, where);
      else if (e.key == "augment_road_removal") c.train.augment_road_removal = parse_bool(e.value, where);
      else if (e.key == "crop_h") c.train.crop_h = static_cast<int>(parse_int(e.value, where));
      else if (e.key == "crop_w") c.train.crop_w = static_cast<int>(parse_int(e.value, where));
      else if (e.key == "camera_only") c.train.camera_only = parse_bool(e.value, where);
      else throw ConfigError("unknown key " + where);
    } else if (e.section == "synth") {
      if (e.key == "count") c.synth_count = static_cast<int>(parse_int(e.value, where));
      else if (e.key == "image_width") c.synth.image_width = static_cast<int>(parse_int(e.value, where));
      else if (e.key == "image_height") c.synth.image_height = static_cast<int>(parse_int(e.value, where));
      else if (e.key == "lidar_lines") c.synth.lidar_lines = static_cast<int>(parse_int(e.value, where));
      else if (e.key == "jitter_sigma") c.synth.jitter_sigma = parse_float(e.value, where);
      else if (e.key == "rgb_noise") c.synth.rgb_noise = parse_float(e.value, where);
      else if (e.key == "brightness_corruption") c.synth.brightness_corruption = parse_bool(e.value, where);
      else if (e.key == "randomize_layout") c.synth.randomize_layout = parse_bool(e.value, where);
      else throw ConfigError("unknown key " + where);
    } else {
      throw ConfigError("unknown section [" + e.section + "]");
    }
  }
  // the scene generator reuses the run seed; train mirrors it for shuffling
  c.synth.seed = c.seed;
  c.train.seed = c.seed;
  return c;
}

inline std::string RunConfig::to_ini() const {
  using detail::format_float;
  using detail::format_int_list;
  std::string s;
  auto line = [&s](const std::string& k, const std::string& v) {
    s += k + " = " + v + "\n";
  };
  auto flag = [&line](const std::string& k, bool v) {
    line(k, v ? "true" : "false");
  };

  s += "[run]\n";
  line("out", out);
  line("seed", std::to_string(seed));
  line("strategy", strategy_name(strategy));
  s += "\n[data]\n";
  line("train_root", train_root);
  line("val_root", val_root);
  line("height", std::to_string(height));
  line("width", std::to_string(width));
  s += "\n[model]\n";
  line("stage_blocks", format_int_list(stage_blocks));
  line("stage_channels", format_int_list(stage_channels));
  line("rgb_channels", std::to_string(rgb_channels));
  line("lidar_channels", std::to_string(lidar_channels));
  flag("decoder_fusion", decoder_fusion);
  s += "\n[adi]\n";
  line("radius", std::to_string(adi.radius));
  line("clip", format_float(adi.clip));
  line("knn_k", std::to_string(adi.knn_k));
  s += "\n[train]\n";
  line("lr", format_float(train.lr));
  line("batch_size", std::to_string(train.batch_size));
  line("max_epochs", std::to_string(train.max_epochs));
  line("plateau_patience", std::to_string(train.plateau_patience));
  line("lr_decay", format_float(train.lr_decay));
  line("min_lr", format_float(train.min_lr));
  flag("augment_multiscale", train.augment_multiscale);
  flag("augment_crop", train.augment_crop);
  flag("augment_brightness", train.augment_brightness);
  flag("augment_road_removal", train.augment_road_removal);
  line("crop_h", std::to_string(train.crop_h));
  line("crop_w", std::to_string(train.crop_w));
  flag("camera_only", train.camera_only);
  s += "\n[synth]\n";
  line("count", std::to_string(synth_count));
  line("image_width", std::to_string(synth.image_width));
  line("image_height", std::to_string(synth.image_height));
  line("lidar_lines", std::to_string(synth.lidar_lines));
  line("jitter_sigma", format_float(synth.jitter_sigma));
  line("rgb_noise", format_float(synth.rgb_noise));
  flag("brightness_corruption", synth.brightness_corruption);
  flag("randomize_layout", synth.randomize_layout);
  return s;
}

inline RunConfig load_run_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config: " + path.string());
  std::ostringstream text;
  text << in.rdbuf();
  return RunConfig::from_ini(text.str());
}

inline void save_run_config(const RunConfig& config,
                            const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw DataError("cannot open for writing: " + path.string());
  out << config.to_ini();
  if (!out) throw DataError("write failed: " + path.string());
}

}  // namespace skipcross
