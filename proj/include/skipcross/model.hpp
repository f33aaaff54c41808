#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <string>
#include <tuple>
#include <utility>
#include <vector>

#include "skipcross/errors.hpp"
#include "skipcross/nn_ops.hpp"
#include "skipcross/rng.hpp"
#include "skipcross/tensor.hpp"

namespace skipcross {

enum class FusionStrategy { skipcross, early, middle, late, cross };

inline const char* strategy_name(FusionStrategy s) {
  switch (s) {
    case FusionStrategy::skipcross: return "skipcross";
    case FusionStrategy::early: return "early";
    case FusionStrategy::middle: return "middle";
    case FusionStrategy::late: return "late";
    case FusionStrategy::cross: return "cross";
  }
  throw UsageError("unknown fusion strategy value");
}

inline FusionStrategy parse_strategy(const std::string& name) {
  if (name == "skipcross") return FusionStrategy::skipcross;
  if (name == "early") return FusionStrategy::early;
  if (name == "middle") return FusionStrategy::middle;
  if (name == "late") return FusionStrategy::late;
  if (name == "cross") return FusionStrategy::cross;
  throw UsageError("unknown fusion strategy '" + name + "'");
}

// Capacity of the dense cross-connection scheme: a stage with B blocks has
// B(B+1)/2 scalars per direction, B(B+1) total.
inline int64_t count_cross_weights(const std::vector<int>& stage_blocks) {
  int64_t total = 0;
  for (int b : stage_blocks) {
    total += static_cast<int64_t>(b) * (b + 1);
  }
  return total;
}

struct FusionTopology {
  std::vector<int> stage_blocks{2, 3, 3};
  std::vector<int> stage_channels{32, 64, 128};
  int rgb_in_channels = 3;
  int lidar_in_channels = 1;
  FusionStrategy strategy = FusionStrategy::skipcross;
  bool decoder_fusion_enabled = true;
  std::vector<bool> encoder_mask;  // per-stage cross-connection switch

  int num_stages() const { return static_cast<int>(stage_blocks.size()); }

  // one stride-2 stem plus one pool per stage
  int downsample_factor() const { return 1 << (num_stages() + 1); }

  bool stage_cross_enabled(int s) const {
    return encoder_mask.empty() || encoder_mask[static_cast<size_t>(s)];
  }

  void validate() const {
    if (stage_blocks.empty()) {
      throw ConfigError("topology needs at least one stage");
    }
    if (stage_blocks.size() != stage_channels.size()) {
      throw ConfigError("stage_blocks and stage_channels lengths differ (" +
                        std::to_string(stage_blocks.size()) + " vs " +
                        std::to_string(stage_channels.size()) + ")");
    }
    for (int b : stage_blocks) {
      if (b < 1) throw ConfigError("every stage needs at least one block");
    }
    for (int c : stage_channels) {
      if (c < 1) throw ConfigError("stage channels must be positive");
    }
    if (rgb_in_channels < 1 || lidar_in_channels < 1) {
      throw ConfigError("input channel counts must be positive");
    }
    if (!encoder_mask.empty() &&
        encoder_mask.size() != stage_blocks.size()) {
      throw ConfigError("encoder_mask length must match the stage count");
    }
    if (strategy == FusionStrategy::middle && num_stages() < 2) {
      throw ConfigError("middle fusion needs at least two stages");
    }
  }

  bool operator==(const FusionTopology& o) const {
    auto mask = [](const FusionTopology& t) {
      std::vector<bool> m = t.encoder_mask;
      if (m.empty()) m.assign(t.stage_blocks.size(), true);
      return m;
    };
    return stage_blocks == o.stage_blocks &&
           stage_channels == o.stage_channels &&
           rgb_in_channels == o.rgb_in_channels &&
           lidar_in_channels == o.lidar_in_channels &&
           strategy == o.strategy &&
           decoder_fusion_enabled == o.decoder_fusion_enabled &&
           mask(*this) == mask(o);
  }
};

// Applies the per-strategy masks and flags on top of a base topology.
inline FusionTopology configure_strategy(FusionStrategy strategy,
                                         FusionTopology base = {}) {
  base.strategy = strategy;
  const size_t stages = base.stage_blocks.size();
  switch (strategy) {
    case FusionStrategy::skipcross:
    case FusionStrategy::cross:
      base.encoder_mask.assign(stages, true);
      base.decoder_fusion_enabled = true;
      break;
    case FusionStrategy::early:
    case FusionStrategy::middle:
    case FusionStrategy::late:
      base.encoder_mask.assign(stages, false);
      base.decoder_fusion_enabled = false;
      break;
  }
  base.validate();
  return base;
}

// Decoder output channel schedule for S encoder stages: S+1 transposed convs.
// Levels that receive encoder skips mirror the matching encoder widths; the
// final level halves the stem width (floored at 2).
inline std::vector<int> decoder_channels(const std::vector<int>& stage_channels) {
  const int s = static_cast<int>(stage_channels.size());
  std::vector<int> out;
  for (int t = 0; t <= s; ++t) {
    if (t < s - 1) {
      out.push_back(stage_channels[static_cast<size_t>(s - 2 - t)]);
    } else if (t == s - 1) {
      out.push_back(stage_channels[0]);
    } else {
      out.push_back(std::max(2, stage_channels[0] / 2));
    }
  }
  return out;
}

template <typename S>
struct NetworkOutputT {
  TensorT<S> logits;           // [N, 2, H, W]
  TensorT<S> road_confidence;  // [N, 1, H, W], softmax channel 1
};

using NetworkOutput = NetworkOutputT<float>;

template <typename S>
class SkipcrossNetT {
 public:
  using Tensor = TensorT<S>;

  struct NamedParam {
    std::string name;
    Tensor tensor;
  };

  static SkipcrossNetT build(FusionTopology topology, uint64_t seed) {
    topology.validate();
    SkipcrossNetT net;
    net.topo_ = std::move(topology);
    Rng rng(seed);
    net.init_params(rng);
    return net;
  }

  const FusionTopology& topology() const { return topo_; }

  const std::vector<NamedParam>& params() const { return params_; }
  std::vector<NamedParam>& params() { return params_; }

  Tensor param(const std::string& name) const {
    for (const NamedParam& p : params_) {
      if (p.name == name) return p.tensor;
    }
    throw DataError("no parameter named '" + name + "'");
  }

  bool has_param(const std::string& name) const {
    for (const NamedParam& p : params_) {
      if (p.name == name) return true;
    }
    return false;
  }

  int64_t param_count() const {
    int64_t n = 0;
    for (const NamedParam& p : params_) n += p.tensor.numel();
    return n;
  }

  int64_t cross_scalar_count() const {
    int64_t n = 0;
    for (const NamedParam& p : params_) {
      if (p.name.rfind("cross.", 0) == 0) ++n;
    }
    return n;
  }

  void zero_grads() {
    for (NamedParam& p : params_) p.tensor.zero_grad();
  }

  NetworkOutputT<S> forward(const Tensor& rgb, const Tensor& adi) const {
    check_inputs(rgb, adi);
    switch (topo_.strategy) {
      case FusionStrategy::skipcross:
      case FusionStrategy::cross:
        return forward_two_stream(rgb, adi);
      case FusionStrategy::early:
        return forward_early(rgb, adi);
      case FusionStrategy::middle:
        return forward_middle(rgb, adi);
      case FusionStrategy::late:
        return forward_late(rgb, adi);
    }
    throw UsageError("unknown fusion strategy value");
  }

  // Single-stream pass over the RGB branch and shared decoder, ignoring the
  // LiDAR stream entirely (camera-only baseline / fusion-free reference).
  NetworkOutputT<S> forward_rgb_only(const Tensor& rgb) const {
    if (topo_.strategy == FusionStrategy::early ||
        topo_.strategy == FusionStrategy::late) {
      throw UsageError(
          "single-stream forward needs a shared decoder over an rgb branch");
    }
    check_rgb(rgb);
    EncoderTaps taps;
    Tensor e = encode_plain("rgb", rgb, &taps);
    Tensor logits = decode("dec", e, nullptr, nullptr);
    return with_confidence(logits);
  }

 private:
  struct EncoderTaps {
    Tensor stem_out;
    std::vector<Tensor> pooled;  // pre-transition pooled stage outputs
  };

  FusionTopology topo_;
  std::vector<NamedParam> params_;

  // ------------------------------------------------------------------
  // construction
  // ------------------------------------------------------------------

  Tensor add_param(const std::string& name, Tensor t) {
    t.set_requires_grad(true);
    params_.push_back({name, t});
    return t;
  }

  Tensor make_conv_weight(Shape shape, Rng& rng) {
    const int fan_in = shape[1] * shape[2] * shape[3];
    const S stddev = static_cast<S>(std::sqrt(2.0 / fan_in));
    return Tensor::randn(std::move(shape), rng, stddev);
  }

  void add_conv(const std::string& prefix, int cout, int cin, int k, Rng& rng) {
    add_param(prefix + ".w", make_conv_weight({cout, cin, k, k}, rng));
    add_param(prefix + ".b", Tensor::zeros({cout}));
  }

  void add_tconv(const std::string& prefix, int cin, int cout, Rng& rng) {
    add_param(prefix + ".w", make_conv_weight({cin, cout, 2, 2}, rng));
    add_param(prefix + ".b", Tensor::zeros({cout}));
  }

  void add_branch(const std::string& branch, int in_channels, Rng& rng) {
    const auto& ch = topo_.stage_channels;
    add_conv(branch + ".stem", ch[0], in_channels, 3, rng);
    for (int s = 0; s < topo_.num_stages(); ++s) {
      const std::string sp = branch + ".stage" + std::to_string(s);
      for (int b = 0; b < topo_.stage_blocks[static_cast<size_t>(s)]; ++b) {
        const std::string bp = sp + ".block" + std::to_string(b);
        add_conv(bp + ".conv0", ch[static_cast<size_t>(s)],
                 ch[static_cast<size_t>(s)], 3, rng);
        add_conv(bp + ".conv1", ch[static_cast<size_t>(s)],
                 ch[static_cast<size_t>(s)], 3, rng);
      }
      add_conv(sp + ".trans", trans_out_channels(s),
               ch[static_cast<size_t>(s)], 1, rng);
    }
  }

  // LiDAR-side stump for middle fusion: everything up to the merge boundary.
  void add_branch_prefix(const std::string& branch, int in_channels,
                         int through_stage, Rng& rng) {
    const auto& ch = topo_.stage_channels;
    add_conv(branch + ".stem", ch[0], in_channels, 3, rng);
    for (int s = 0; s <= through_stage; ++s) {
      const std::string sp = branch + ".stage" + std::to_string(s);
      for (int b = 0; b < topo_.stage_blocks[static_cast<size_t>(s)]; ++b) {
        const std::string bp = sp + ".block" + std::to_string(b);
        add_conv(bp + ".conv0", ch[static_cast<size_t>(s)],
                 ch[static_cast<size_t>(s)], 3, rng);
        add_conv(bp + ".conv1", ch[static_cast<size_t>(s)],
                 ch[static_cast<size_t>(s)], 3, rng);
      }
      add_conv(sp + ".trans", trans_out_channels(s),
               ch[static_cast<size_t>(s)], 1, rng);
    }
  }

  void add_decoder(const std::string& prefix, bool with_skips, Rng& rng) {
    const std::vector<int> douts = decoder_channels(topo_.stage_channels);
    int cin = trans_out_channels(topo_.num_stages() - 1);
    for (size_t t = 0; t < douts.size(); ++t) {
      add_tconv(prefix + ".tconv" + std::to_string(t), cin, douts[t], rng);
      cin = douts[t];
    }
    if (with_skips) {
      for (int t = 0; t < topo_.num_stages(); ++t) {
        const std::string sp = prefix + ".skip" + std::to_string(t);
        add_param(sp + ".s_rgb", Tensor::scalar(S(0)));
        add_param(sp + ".s_lid", Tensor::scalar(S(0)));
      }
    }
    add_conv(prefix + ".cls", 2, cin, 1, rng);
  }

  void init_params(Rng& rng) {
    switch (topo_.strategy) {
      case FusionStrategy::skipcross:
      case FusionStrategy::cross: {
        add_branch("rgb", topo_.rgb_in_channels, rng);
        add_branch("lid", topo_.lidar_in_channels, rng);
        for (int s = 0; s < topo_.num_stages(); ++s) {
          if (!topo_.stage_cross_enabled(s)) continue;
          const std::string sp = "cross.stage" + std::to_string(s);
          const int blocks = topo_.stage_blocks[static_cast<size_t>(s)];
          if (topo_.strategy == FusionStrategy::cross) {
            // one shared scalar per adjacent pair, used in both directions
            for (int j = 1; j <= blocks; ++j) {
              add_param(sp + ".diag." + std::to_string(j), Tensor::scalar(S(0)));
            }
          } else {
            for (const char* dir : {"l2r", "r2l"}) {
              for (int j = 1; j <= blocks; ++j) {
                for (int k = 0; k < j; ++k) {
                  add_param(sp + "." + dir + "." + std::to_string(k) + "_" +
                                std::to_string(j),
                            Tensor::scalar(S(0)));
                }
              }
            }
          }
        }
        add_param("merge.g_rgb", Tensor::scalar(S(0.5)));
        add_param("merge.g_lid", Tensor::scalar(S(0.5)));
        add_decoder("dec", topo_.decoder_fusion_enabled, rng);
        break;
      }
      case FusionStrategy::early:
        add_branch("main", topo_.rgb_in_channels + topo_.lidar_in_channels,
                   rng);
        add_decoder("dec", false, rng);
        break;
      case FusionStrategy::middle:
        add_branch("rgb", topo_.rgb_in_channels, rng);
        add_branch_prefix("lid", topo_.lidar_in_channels, 0, rng);
        add_decoder("dec", false, rng);
        break;
      case FusionStrategy::late:
        add_branch("rgb", topo_.rgb_in_channels, rng);
        add_branch("lid", topo_.lidar_in_channels, rng);
        add_decoder("dec_rgb", false, rng);
        add_decoder("dec_lid", false, rng);
        break;
    }
  }

  int trans_out_channels(int s) const {
    const auto& ch = topo_.stage_channels;
    if (s + 1 < topo_.num_stages()) return ch[static_cast<size_t>(s) + 1];
    return 2 * ch.back();
  }

  // ------------------------------------------------------------------
  // forward pieces
  // ------------------------------------------------------------------

  void check_rgb(const Tensor& rgb) const {
    if (rgb.rank() != 4 || rgb.extent(1) != topo_.rgb_in_channels) {
      throw ShapeError("rgb input must be [N," +
                       std::to_string(topo_.rgb_in_channels) + ",H,W]");
    }
    const int f = topo_.downsample_factor();
    if (rgb.extent(2) % f != 0 || rgb.extent(3) % f != 0) {
      throw ShapeError("spatial extents must be divisible by " +
                       std::to_string(f) + ", got " +
                       std::to_string(rgb.extent(2)) + "x" +
                       std::to_string(rgb.extent(3)));
    }
  }

  void check_inputs(const Tensor& rgb, const Tensor& adi) const {
    check_rgb(rgb);
    if (adi.rank() != 4 || adi.extent(1) != topo_.lidar_in_channels) {
      throw ShapeError("lidar input must be [N," +
                       std::to_string(topo_.lidar_in_channels) + ",H,W]");
    }
    if (adi.extent(0) != rgb.extent(0) || adi.extent(2) != rgb.extent(2) ||
        adi.extent(3) != rgb.extent(3)) {
      throw ShapeError("rgb and lidar inputs must be spatially aligned");
    }
  }

  Tensor conv_p(const std::string& name, const Tensor& x, int stride,
                int pad) const {
    return conv2d(x, param(name + ".w"), param(name + ".b"), stride, pad);
  }

  Tensor basic_block(const std::string& prefix, const Tensor& x) const {
    Tensor h = relu(conv_p(prefix + ".conv0", x, 1, 1));
    Tensor h2 = conv_p(prefix + ".conv1", h, 1, 1);
    return relu(add(h2, x));
  }

  Tensor stage_plain(const std::string& branch, int s, Tensor x) const {
    const std::string sp = branch + ".stage" + std::to_string(s);
    for (int b = 0; b < topo_.stage_blocks[static_cast<size_t>(s)]; ++b) {
      x = basic_block(sp + ".block" + std::to_string(b), x);
    }
    return x;
  }

  Tensor pool_and_transition(const std::string& branch, int s, Tensor x,
                             EncoderTaps* taps) const {
    x = maxpool2d(x);
    if (taps) taps->pooled.push_back(x);
    return relu(conv_p(branch + ".stage" + std::to_string(s) + ".trans", x, 1, 0));
  }

  Tensor encode_plain(const std::string& branch, const Tensor& input,
                      EncoderTaps* taps) const {
    Tensor x = relu(conv_p(branch + ".stem", input, 2, 1));
    if (taps) taps->stem_out = x;
    for (int s = 0; s < topo_.num_stages(); ++s) {
      x = stage_plain(branch, s, x);
      x = pool_and_transition(branch, s, x, taps);
    }
    return x;
  }

  Tensor cross_scalar(int s, const char* dir, int k, int j) const {
    if (topo_.strategy == FusionStrategy::cross) {
      return param("cross.stage" + std::to_string(s) + ".diag." +
                   std::to_string(j));
    }
    return param("cross.stage" + std::to_string(s) + "." + dir + "." +
                 std::to_string(k) + "_" + std::to_string(j));
  }

  bool connection_enabled(int s, int k, int j) const {
    if (!topo_.stage_cross_enabled(s)) return false;
    if (topo_.strategy == FusionStrategy::cross) return k == j - 1;
    return true;
  }

  // In-stage recurrence: each new block output additionally receives every
  // earlier feature of the other stream, scaled by its learnable weight.
  // Feature index 0 is the stage input; index j is the j-th block's output.
  std::pair<Tensor, Tensor> stage_cross(int s, Tensor xr, Tensor xl) const {
    const int blocks = topo_.stage_blocks[static_cast<size_t>(s)];
    const std::string rp = "rgb.stage" + std::to_string(s) + ".block";
    const std::string lp = "lid.stage" + std::to_string(s) + ".block";
    std::vector<Tensor> fr{xr}, fl{xl};
    for (int j = 1; j <= blocks; ++j) {
      Tensor r = basic_block(rp + std::to_string(j - 1), fr[static_cast<size_t>(j) - 1]);
      for (int k = 0; k < j; ++k) {
        if (connection_enabled(s, k, j)) {
          r = scale_add(r, cross_scalar(s, "l2r", k, j), fl[static_cast<size_t>(k)]);
        }
      }
      Tensor l = basic_block(lp + std::to_string(j - 1), fl[static_cast<size_t>(j) - 1]);
      for (int k = 0; k < j; ++k) {
        if (connection_enabled(s, k, j)) {
          l = scale_add(l, cross_scalar(s, "r2l", k, j), fr[static_cast<size_t>(k)]);
        }
      }
      fr.push_back(r);
      fl.push_back(l);
    }
    return {fr.back(), fl.back()};
  }

  // Decoder: S+1 stride-2 transposed convs back to input resolution, each
  // fused level adding scaled same-resolution encoder features before ReLU,
  // then a 1x1 two-way classifier.
  Tensor decode(const std::string& prefix, Tensor d, const EncoderTaps* taps_r,
                const EncoderTaps* taps_l) const {
    const int stages = topo_.num_stages();
    const bool fuse = taps_r != nullptr && taps_l != nullptr;
    for (int t = 0; t <= stages; ++t) {
      const std::string tp = prefix + ".tconv" + std::to_string(t);
      d = transposed_conv2d(d, param(tp + ".w"), param(tp + ".b"), 2, 0);
      if (fuse && t < stages) {
        const Tensor& sr = t < stages - 1
                               ? taps_r->pooled[static_cast<size_t>(stages - 2 - t)]
                               : taps_r->stem_out;
        const Tensor& sl = t < stages - 1
                               ? taps_l->pooled[static_cast<size_t>(stages - 2 - t)]
                               : taps_l->stem_out;
        const std::string sp = prefix + ".skip" + std::to_string(t);
        Tensor skip = scale_add(smul(param(sp + ".s_rgb"), sr),
                                param(sp + ".s_lid"), sl);
        d = add(d, skip);
      }
      d = relu(d);
    }
    return conv_p(prefix + ".cls", d, 1, 0);
  }

  NetworkOutputT<S> with_confidence(const Tensor& logits) const {
    Tensor probs = softmax_channels(logits);
    const int n = logits.extent(0), h = logits.extent(2), w = logits.extent(3);
    Tensor conf = Tensor::zeros({n, 1, h, w});
    const int64_t plane = static_cast<int64_t>(h) * w;
    for (int i = 0; i < n; ++i) {
      std::copy_n(probs.data() + (static_cast<int64_t>(i) * 2 + 1) * plane,
                  plane, conf.data() + static_cast<int64_t>(i) * plane);
    }
    return {logits, conf};
  }

  NetworkOutputT<S> forward_two_stream(const Tensor& rgb,
                                       const Tensor& adi) const {
    EncoderTaps taps_r, taps_l;
    Tensor xr = relu(conv_p("rgb.stem", rgb, 2, 1));
    Tensor xl = relu(conv_p("lid.stem", adi, 2, 1));
    taps_r.stem_out = xr;
    taps_l.stem_out = xl;
    for (int s = 0; s < topo_.num_stages(); ++s) {
      if (topo_.stage_cross_enabled(s)) {
        std::tie(xr, xl) = stage_cross(s, xr, xl);
      } else {
        xr = stage_plain("rgb", s, xr);
        xl = stage_plain("lid", s, xl);
      }
      xr = pool_and_transition("rgb", s, xr, &taps_r);
      xl = pool_and_transition("lid", s, xl, &taps_l);
    }
    Tensor e = add(smul(param("merge.g_rgb"), xr), smul(param("merge.g_lid"), xl));
    Tensor logits =
        topo_.decoder_fusion_enabled
            ? decode("dec", e, &taps_r, &taps_l)
            : decode("dec", e, nullptr, nullptr);
    return with_confidence(logits);
  }

  NetworkOutputT<S> forward_early(const Tensor& rgb, const Tensor& adi) const {
    Tensor x = concat_channels(rgb, adi);
    Tensor e = encode_plain("main", x, nullptr);
    return with_confidence(decode("dec", e, nullptr, nullptr));
  }

  NetworkOutputT<S> forward_middle(const Tensor& rgb, const Tensor& adi) const {
    Tensor xr = relu(conv_p("rgb.stem", rgb, 2, 1));
    xr = stage_plain("rgb", 0, xr);
    xr = pool_and_transition("rgb", 0, xr, nullptr);
    Tensor xl = relu(conv_p("lid.stem", adi, 2, 1));
    xl = stage_plain("lid", 0, xl);
    xl = pool_and_transition("lid", 0, xl, nullptr);
    Tensor x = add(xr, xl);  // single additive fusion at the stage boundary
    for (int s = 1; s < topo_.num_stages(); ++s) {
      x = stage_plain("rgb", s, x);
      x = pool_and_transition("rgb", s, x, nullptr);
    }
    return with_confidence(decode("dec", x, nullptr, nullptr));
  }

  NetworkOutputT<S> forward_late(const Tensor& rgb, const Tensor& adi) const {
    Tensor er = encode_plain("rgb", rgb, nullptr);
    Tensor el = encode_plain("lid", adi, nullptr);
    Tensor lr = decode("dec_rgb", er, nullptr, nullptr);
    Tensor ll = decode("dec_lid", el, nullptr, nullptr);
    Tensor logits = smul(Tensor::scalar(S(0.5)), add(lr, ll));
    return with_confidence(logits);
  }
};

using SkipcrossNet = SkipcrossNetT<float>;
using SkipcrossNet64 = SkipcrossNetT<double>;

}  // namespace skipcross
