#pragma once

#include <algorithm>
#include <bit>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <istream>
#include <ostream>
#include <sstream>
#include <string>
#include <type_traits>
#include <vector>

#include <json.hpp>

#include "skipcross/errors.hpp"
#include "skipcross/model.hpp"
#include "skipcross/tensor.hpp"

namespace skipcross {

// Weight file layout (little endian):
//   magic "SKXC", u32 version, u32 tensor count, then per tensor:
//   u16 name length, name bytes, u8 rank, rank x u32 extents, f32 payload.
// The first tensor is always named "topology" and stores the topology JSON
// one byte per element, so a file fully describes how to rebuild the network.

namespace detail {

constexpr char kCheckpointMagic[4] = {'S', 'K', 'X', 'C'};
constexpr uint32_t kCheckpointVersion = 1;

template <typename T>
void write_le(std::ostream& out, T v) {
  static_assert(std::is_integral_v<T> || std::is_floating_point_v<T>);
  unsigned char bytes[sizeof(T)];
  std::memcpy(bytes, &v, sizeof(T));
  if constexpr (std::endian::native == std::endian::big) {
    std::reverse(bytes, bytes + sizeof(T));
  }
  out.write(reinterpret_cast<const char*>(bytes), sizeof(T));
}

template <typename T>
T read_le(std::istream& in) {
  unsigned char bytes[sizeof(T)];
  in.read(reinterpret_cast<char*>(bytes), sizeof(T));
  if (in.gcount() != static_cast<std::streamsize>(sizeof(T))) {
    throw DataError("checkpoint truncated");
  }
  if constexpr (std::endian::native == std::endian::big) {
    std::reverse(bytes, bytes + sizeof(T));
  }
  T v;
  std::memcpy(&v, bytes, sizeof(T));
  return v;
}

inline void write_f32_block(std::ostream& out, const float* v, size_t n) {
  if constexpr (std::endian::native == std::endian::little) {
    out.write(reinterpret_cast<const char*>(v),
              static_cast<std::streamsize>(n * sizeof(float)));
  } else {
    for (size_t i = 0; i < n; ++i) write_le<float>(out, v[i]);
  }
}

inline void read_f32_block(std::istream& in, float* v, size_t n) {
  if constexpr (std::endian::native == std::endian::little) {
    in.read(reinterpret_cast<char*>(v),
            static_cast<std::streamsize>(n * sizeof(float)));
    if (in.gcount() != static_cast<std::streamsize>(n * sizeof(float))) {
      throw DataError("checkpoint truncated");
    }
  } else {
    for (size_t i = 0; i < n; ++i) v[i] = read_le<float>(in);
  }
}

inline void write_tensor_record(std::ostream& out, const std::string& name,
                                const Shape& shape, const float* values,
                                size_t count) {
  if (name.size() > 0xffff) throw DataError("tensor name too long");
  write_le<uint16_t>(out, static_cast<uint16_t>(name.size()));
  out.write(name.data(), static_cast<std::streamsize>(name.size()));
  write_le<uint8_t>(out, static_cast<uint8_t>(shape.size()));
  for (int e : shape) write_le<uint32_t>(out, static_cast<uint32_t>(e));
  write_f32_block(out, values, count);
}

struct TensorRecord {
  std::string name;
  Shape shape;
  std::vector<float> values;
};

inline TensorRecord read_tensor_record(std::istream& in) {
  TensorRecord rec;
  const uint16_t name_len = read_le<uint16_t>(in);
  rec.name.resize(name_len);
  in.read(rec.name.data(), name_len);
  if (in.gcount() != static_cast<std::streamsize>(name_len)) {
    throw DataError("checkpoint truncated");
  }
  const uint8_t rank = read_le<uint8_t>(in);
  if (rank > 4) throw DataError("checkpoint tensor rank out of range");
  int64_t numel = 1;
  for (int r = 0; r < rank; ++r) {
    const uint32_t e = read_le<uint32_t>(in);
    if (e == 0 || e > (1u << 28)) {
      throw DataError("checkpoint tensor extent out of range");
    }
    rec.shape.push_back(static_cast<int>(e));
    numel *= e;
  }
  rec.values.resize(static_cast<size_t>(numel));
  read_f32_block(in, rec.values.data(), rec.values.size());
  return rec;
}

inline nlohmann::json topology_to_json(const FusionTopology& t) {
  nlohmann::json j;
  j["stage_blocks"] = t.stage_blocks;
  j["stage_channels"] = t.stage_channels;
  j["rgb_in_channels"] = t.rgb_in_channels;
  j["lidar_in_channels"] = t.lidar_in_channels;
  j["strategy"] = strategy_name(t.strategy);
  j["decoder_fusion"] = t.decoder_fusion_enabled;
  std::vector<int> mask;
  for (int s = 0; s < t.num_stages(); ++s) {
    mask.push_back(t.stage_cross_enabled(s) ? 1 : 0);
  }
  j["encoder_mask"] = mask;
  return j;
}

inline FusionTopology topology_from_json(const nlohmann::json& j) {
  FusionTopology t;
  try {
    t.stage_blocks = j.at("stage_blocks").get<std::vector<int>>();
    t.stage_channels = j.at("stage_channels").get<std::vector<int>>();
    t.rgb_in_channels = j.at("rgb_in_channels").get<int>();
    t.lidar_in_channels = j.at("lidar_in_channels").get<int>();
    t.strategy = parse_strategy(j.at("strategy").get<std::string>());
    t.decoder_fusion_enabled = j.at("decoder_fusion").get<bool>();
    const auto mask = j.at("encoder_mask").get<std::vector<int>>();
    t.encoder_mask.clear();
    for (int m : mask) t.encoder_mask.push_back(m != 0);
  } catch (const nlohmann::json::exception& e) {
    throw DataError(std::string("bad topology header: ") + e.what());
  }
  t.validate();
  return t;
}

}  // namespace detail

inline void save_weights(const SkipcrossNet& net, std::ostream& out) {
  out.write(detail::kCheckpointMagic, 4);
  detail::write_le<uint32_t>(out, detail::kCheckpointVersion);
  detail::write_le<uint32_t>(
      out, static_cast<uint32_t>(net.params().size()) + 1);
  const std::string topo = detail::topology_to_json(net.topology()).dump();
  std::vector<float> topo_bytes(topo.begin(), topo.end());
  detail::write_tensor_record(out, "topology",
                              {static_cast<int>(topo_bytes.size())},
                              topo_bytes.data(), topo_bytes.size());
  for (const auto& p : net.params()) {
    detail::write_tensor_record(out, p.name, p.tensor.shape(),
                                p.tensor.data(),
                                static_cast<size_t>(p.tensor.numel()));
  }
  if (!out) throw DataError("failed writing checkpoint stream");
}

inline void save_weights(const SkipcrossNet& net,
                         const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot open '" + path.string() + "' for writing");
  save_weights(net, out);
  out.flush();
  if (!out) throw DataError("failed writing '" + path.string() + "'");
}

inline std::string save_weights_to_string(const SkipcrossNet& net) {
  std::ostringstream out(std::ios::binary);
  save_weights(net, out);
  return out.str();
}

inline SkipcrossNet load_weights(std::istream& in) {
  char magic[4];
  in.read(magic, 4);
  if (in.gcount() != 4 || std::memcmp(magic, detail::kCheckpointMagic, 4) != 0) {
    throw DataError("not a weight file (bad magic)");
  }
  const uint32_t version = detail::read_le<uint32_t>(in);
  if (version != detail::kCheckpointVersion) {
    throw DataError("unsupported weight file version " +
                    std::to_string(version));
  }
  const uint32_t count = detail::read_le<uint32_t>(in);
  if (count == 0) throw DataError("weight file has no tensors");

  detail::TensorRecord topo_rec = detail::read_tensor_record(in);
  if (topo_rec.name != "topology") {
    throw DataError("weight file must start with the topology record");
  }
  std::string topo_text;
  for (float v : topo_rec.values) {
    topo_text.push_back(static_cast<char>(static_cast<unsigned char>(v)));
  }
  nlohmann::json j = nlohmann::json::parse(topo_text, nullptr, false);
  if (j.is_discarded()) throw DataError("topology header is not valid JSON");
  FusionTopology topo = detail::topology_from_json(j);

  SkipcrossNet net = SkipcrossNet::build(topo, 0);
  if (net.params().size() + 1 != count) {
    throw DataError("weight file tensor count mismatch: header says " +
                    std::to_string(count) + ", topology needs " +
                    std::to_string(net.params().size() + 1));
  }
  for (auto& p : net.params()) {
    detail::TensorRecord rec = detail::read_tensor_record(in);
    if (rec.name != p.name) {
      throw DataError("weight file order mismatch: expected '" + p.name +
                      "', found '" + rec.name + "'");
    }
    if (rec.shape != p.tensor.shape()) {
      throw DataError("shape mismatch for '" + p.name + "': file has " +
                      shape_str(rec.shape) + ", network needs " +
                      shape_str(p.tensor.shape()));
    }
    std::copy(rec.values.begin(), rec.values.end(), p.tensor.data());
  }
  return net;
}

inline SkipcrossNet load_weights(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open '" + path.string() + "'");
  return load_weights(in);
}

inline SkipcrossNet load_weights_from_string(const std::string& blob) {
  std::istringstream in(blob, std::ios::binary);
  return load_weights(in);
}

// Loads and additionally insists the stored topology matches the expected one.
inline SkipcrossNet load_weights(const std::filesystem::path& path,
                                 const FusionTopology& expected) {
  SkipcrossNet net = load_weights(path);
  if (!(net.topology() == expected)) {
    throw DataError("weight file topology does not match the requested one");
  }
  return net;
}

}  // namespace skipcross
