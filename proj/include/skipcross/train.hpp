#pragma once

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <functional>
#include <string>
#include <vector>

#include "skipcross/checkpoint.hpp"
#include "skipcross/data.hpp"
#include "skipcross/metrics.hpp"
#include "skipcross/model.hpp"
#include "skipcross/nn_ops.hpp"
#include "skipcross/rng.hpp"
#include "skipcross/tensor.hpp"

namespace skipcross {

struct TrainConfig {
  float lr = 1e-3f;
  int batch_size = 4;
  int max_epochs = 100;
  int plateau_patience = 10;
  float lr_decay = 0.1f;
  float min_lr = 1e-6f;
  bool augment_multiscale = false;
  bool augment_crop = false;
  bool augment_brightness = false;
  bool augment_road_removal = false;
  uint64_t seed = 0;
  int crop_h = 64;
  int crop_w = 64;
  // train and evaluate on the camera stream alone (single-stream forward)
  bool camera_only = false;

  void validate() const {
    if (lr <= 0) throw ConfigError("lr must be positive");
    if (batch_size < 1) throw ConfigError("batch_size must be >= 1");
    if (max_epochs < 0) throw ConfigError("max_epochs must be >= 0");
    if (plateau_patience < 1) throw ConfigError("plateau_patience must be >= 1");
    if (lr_decay <= 0 || lr_decay >= 1) {
      throw ConfigError("lr_decay must be in (0, 1)");
    }
    if (min_lr <= 0) throw ConfigError("min_lr must be positive");
    if (crop_h % 16 != 0 || crop_w % 16 != 0 || crop_h <= 0 || crop_w <= 0) {
      throw ConfigError("crop size must be positive and divisible by 16");
    }
  }
};

// Adaptive-moment optimizer with bias correction. Parameters whose gradient
// stays zero keep exactly their value (zero moments update by exactly zero).
class Adam {
 public:
  explicit Adam(std::vector<Tensor> params, float lr = 1e-3f,
                float beta1 = 0.9f, float beta2 = 0.999f, float eps = 1e-8f)
      : params_(std::move(params)), lr_(lr), beta1_(beta1), beta2_(beta2),
        eps_(eps) {
    for (const Tensor& p : params_) {
      slots_.push_back({std::vector<float>(static_cast<size_t>(p.numel()), 0.0f),
                        std::vector<float>(static_cast<size_t>(p.numel()), 0.0f)});
    }
  }

  static Adam for_net(SkipcrossNet& net, float lr = 1e-3f) {
    std::vector<Tensor> params;
    for (auto& p : net.params()) params.push_back(p.tensor);
    return Adam(std::move(params), lr);
  }

  float lr() const { return lr_; }
  void set_lr(float lr) { lr_ = lr; }
  int64_t step_count() const { return t_; }

  void step() {
    ++t_;
    const float bc1 = 1.0f - std::pow(beta1_, static_cast<float>(t_));
    const float bc2 = 1.0f - std::pow(beta2_, static_cast<float>(t_));
    for (size_t i = 0; i < params_.size(); ++i) {
      Tensor& p = params_[i];
      auto g = p.grad();
      float* value = p.data();
      std::vector<float>& m = slots_[i].m;
      std::vector<float>& v = slots_[i].v;
      for (size_t j = 0; j < m.size(); ++j) {
        m[j] = beta1_ * m[j] + (1.0f - beta1_) * g[j];
        v[j] = beta2_ * v[j] + (1.0f - beta2_) * g[j] * g[j];
        const float mhat = m[j] / bc1;
        const float vhat = v[j] / bc2;
        value[j] -= lr_ * mhat / (std::sqrt(vhat) + eps_);
      }
    }
  }

  void zero_grad() {
    for (Tensor& p : params_) p.zero_grad();
  }

 private:
  struct Slot {
    std::vector<float> m, v;
  };
  std::vector<Tensor> params_;
  std::vector<Slot> slots_;
  int64_t t_ = 0;
  float lr_, beta1_, beta2_, eps_;
};

// ---------------------------------------------------------------------------
// augmentation
// ---------------------------------------------------------------------------

// Applies, in order: uniform rescale, crop to (crop_h, crop_w), brightness
// distortion of the color image, and road-region erasure. The same rng drives
// every draw, so a fixed seed fixes the output. With cropping disabled the
// sample is resized to the crop size instead, so outputs always share one
// shape. Draws are only consumed by enabled steps.
inline Sample augment(const Sample& in, const TrainConfig& cfg, Rng& rng) {
  in.validate();
  Sample out = in;

  if (cfg.augment_multiscale) {
    const double s = 0.75 + 0.5 * rng.uniform();
    const int h = std::max(1, static_cast<int>(std::lround(in.rgb.height * s)));
    const int w = std::max(1, static_cast<int>(std::lround(in.rgb.width * s)));
    out.rgb = resize_bilinear(out.rgb, h, w);
    out.adi = resize_bilinear(out.adi, h, w);
    out.mask = resize_nearest(out.mask, h, w);
  }

  if (cfg.augment_crop) {
    if (out.rgb.height < cfg.crop_h || out.rgb.width < cfg.crop_w) {
      throw DataError("crop size exceeds the (scaled) sample size");
    }
    const int max_y = out.rgb.height - cfg.crop_h;
    const int max_x = out.rgb.width - cfg.crop_w;
    const int oy = max_y > 0 ? static_cast<int>(rng.uniform_int(
                                   static_cast<uint64_t>(max_y) + 1))
                             : 0;
    const int ox = max_x > 0 ? static_cast<int>(rng.uniform_int(
                                   static_cast<uint64_t>(max_x) + 1))
                             : 0;
    Image rgb(3, cfg.crop_h, cfg.crop_w);
    Image adi(1, cfg.crop_h, cfg.crop_w);
    Mask mask(cfg.crop_h, cfg.crop_w);
    for (int y = 0; y < cfg.crop_h; ++y) {
      for (int x = 0; x < cfg.crop_w; ++x) {
        for (int c = 0; c < 3; ++c) rgb.at(c, y, x) = out.rgb.at(c, oy + y, ox + x);
        adi.at(0, y, x) = out.adi.at(0, oy + y, ox + x);
        mask.at(y, x) = out.mask.at(oy + y, ox + x);
      }
    }
    out.rgb = std::move(rgb);
    out.adi = std::move(adi);
    out.mask = std::move(mask);
  } else if (out.rgb.height != cfg.crop_h || out.rgb.width != cfg.crop_w) {
    out.rgb = resize_bilinear(out.rgb, cfg.crop_h, cfg.crop_w);
    out.adi = resize_bilinear(out.adi, cfg.crop_h, cfg.crop_w);
    out.mask = resize_nearest(out.mask, cfg.crop_h, cfg.crop_w);
  }

  if (cfg.augment_brightness) {
    const float factor = static_cast<float>(0.6 + 0.8 * rng.uniform());
    for (float& p : out.rgb.data) p = std::clamp(p * factor, 0.0f, 1.0f);
  }

  if (cfg.augment_road_removal && rng.uniform() < 0.5) {
    std::vector<int> road_pixels;
    for (int i = 0; i < out.mask.height * out.mask.width; ++i) {
      if (out.mask.data[static_cast<size_t>(i)]) road_pixels.push_back(i);
    }
    if (!road_pixels.empty()) {
      const int h = out.rgb.height, w = out.rgb.width;
      // rectangle with area in [5%, 15%] of the image and a random aspect
      const double area = (0.05 + 0.10 * rng.uniform()) * h * w;
      const double aspect = 0.5 + 1.5 * rng.uniform();
      int rh = std::clamp(static_cast<int>(std::lround(std::sqrt(area * aspect))), 1, h);
      int rw = std::clamp(static_cast<int>(std::lround(area / rh)), 1, w);
      const int center =
          road_pixels[static_cast<size_t>(rng.uniform_int(road_pixels.size()))];
      const int cy = center / w, cx = center % w;
      const int y0 = std::clamp(cy - rh / 2, 0, h - rh);
      const int x0 = std::clamp(cx - rw / 2, 0, w - rw);
      float mean[3] = {0, 0, 0};
      const int64_t pixels = out.rgb.pixels();
      for (int c = 0; c < 3; ++c) {
        double acc = 0;
        for (int64_t i = 0; i < pixels; ++i) {
          acc += out.rgb.data[static_cast<size_t>(c * pixels + i)];
        }
        mean[c] = static_cast<float>(acc / static_cast<double>(pixels));
      }
      for (int y = y0; y < y0 + rh; ++y) {
        for (int x = x0; x < x0 + rw; ++x) {
          for (int c = 0; c < 3; ++c) out.rgb.at(c, y, x) = mean[c];
        }
      }
    }
  }

  out.validate();
  return out;
}

// ---------------------------------------------------------------------------
// batching and evaluation
// ---------------------------------------------------------------------------

struct Batch {
  Tensor rgb;               // [N,3,H,W]
  Tensor adi;               // [N,1,H,W]
  std::vector<int> labels;  // N*H*W, row-major per image
};

inline Batch make_batch(const std::vector<const Sample*>& samples) {
  if (samples.empty()) throw UsageError("empty batch");
  const int h = samples[0]->height(), w = samples[0]->width();
  const int n = static_cast<int>(samples.size());
  Batch b;
  b.rgb = Tensor::zeros({n, 3, h, w});
  b.adi = Tensor::zeros({n, 1, h, w});
  b.labels.resize(static_cast<size_t>(n) * h * w);
  const int64_t plane = static_cast<int64_t>(h) * w;
  for (int i = 0; i < n; ++i) {
    const Sample& s = *samples[i];
    if (s.height() != h || s.width() != w) {
      throw ShapeError("batch mixes sample sizes");
    }
    std::copy(s.rgb.data.begin(), s.rgb.data.end(),
              b.rgb.data() + static_cast<int64_t>(i) * 3 * plane);
    std::copy(s.adi.data.begin(), s.adi.data.end(),
              b.adi.data() + static_cast<int64_t>(i) * plane);
    for (int64_t j = 0; j < plane; ++j) {
      b.labels[static_cast<size_t>(i * plane + j)] = s.mask.data[static_cast<size_t>(j)];
    }
  }
  return b;
}

inline NetworkOutput run_forward(const SkipcrossNet& net, const Batch& batch,
                                 bool camera_only) {
  return camera_only ? net.forward_rgb_only(batch.rgb)
                     : net.forward(batch.rgb, batch.adi);
}

// One optimization step: forward, cross-entropy, backward, parameter update.
// Gradients are cleared afterwards. A non-finite loss aborts loudly.
inline float train_step(const SkipcrossNet& net, const Batch& batch,
                        Adam& optimizer, bool camera_only = false) {
  float loss_value = 0.0f;
  {
    Tape<float> tape;
    Tensor loss =
        softmax_cross_entropy(run_forward(net, batch, camera_only).logits,
                              batch.labels);
    loss_value = loss.item();
    if (!std::isfinite(loss_value)) {
      throw NumericError("training loss became non-finite (" +
                         std::to_string(loss_value) + ") at step " +
                         std::to_string(optimizer.step_count() + 1));
    }
    tape.backward(loss);
  }
  optimizer.step();
  optimizer.zero_grad();
  return loss_value;
}

struct ValScore {
  double maxf = 0.0;
  double accuracy = 0.0;  // at the 0.5 confidence threshold
};

inline void accumulate_scores(const NetworkOutput& out,
                              const std::vector<int>& labels,
                              ThresholdSweep& sweep, int64_t& correct) {
  const float* conf = out.road_confidence.data();
  const int64_t n = out.road_confidence.numel();
  std::vector<float> confidence(conf, conf + n);
  std::vector<uint8_t> gt(static_cast<size_t>(n));
  for (int64_t i = 0; i < n; ++i) {
    gt[static_cast<size_t>(i)] = static_cast<uint8_t>(labels[static_cast<size_t>(i)]);
    const bool road = conf[i] > 0.5f;
    correct += road == (labels[static_cast<size_t>(i)] != 0);
  }
  sweep.add(sweep_confidence(confidence, gt));
}

inline ValScore evaluate_maxf(const SkipcrossNet& net,
                              const std::vector<Sample>& samples,
                              int batch_size, bool camera_only = false) {
  if (samples.empty()) throw UsageError("empty evaluation set");
  ThresholdSweep sweep;
  int64_t correct = 0;
  for (size_t start = 0; start < samples.size();
       start += static_cast<size_t>(batch_size)) {
    std::vector<const Sample*> ptrs;
    for (size_t i = start;
         i < std::min(samples.size(), start + static_cast<size_t>(batch_size));
         ++i) {
      ptrs.push_back(&samples[i]);
    }
    const Batch batch = make_batch(ptrs);
    accumulate_scores(run_forward(net, batch, camera_only), batch.labels,
                      sweep, correct);
  }
  ValScore score;
  score.maxf = maxf_from_sweep(sweep).maxf;
  score.accuracy =
      static_cast<double>(correct) / static_cast<double>(sweep.total_pixels);
  return score;
}

inline MetricsReport evaluate_dataset(const SkipcrossNet& net,
                                      const std::vector<Sample>& samples,
                                      int batch_size, bool camera_only = false) {
  if (samples.empty()) throw UsageError("empty evaluation set");
  ThresholdSweep sweep;
  int64_t correct = 0;
  for (size_t start = 0; start < samples.size();
       start += static_cast<size_t>(batch_size)) {
    std::vector<const Sample*> ptrs;
    for (size_t i = start;
         i < std::min(samples.size(), start + static_cast<size_t>(batch_size));
         ++i) {
      ptrs.push_back(&samples[i]);
    }
    const Batch batch = make_batch(ptrs);
    accumulate_scores(run_forward(net, batch, camera_only), batch.labels,
                      sweep, correct);
  }
  return report_from_sweep(sweep);
}

// ---------------------------------------------------------------------------
// fit
// ---------------------------------------------------------------------------

struct EpochRecord {
  int epoch = 0;
  double train_loss = 0.0;
  double val_maxf = 0.0;
  double val_accuracy = 0.0;
  float lr = 0.0f;
  double seconds = 0.0;
};

struct TrainHistory {
  std::vector<EpochRecord> epochs;
  std::string best_weights;  // serialized checkpoint of the best-MaxF epoch
  double best_maxf = 0.0;
  int best_epoch = -1;
};

// Returning false stops training after the current epoch.
using EpochCallback = std::function<bool(const EpochRecord&)>;

// Epoch loop: shuffled seeded batches, per-epoch validation MaxF, plateau LR
// decay (factor lr_decay after plateau_patience epochs without a MaxF
// improvement > 1e-4, floored at min_lr), best checkpoint retention.
inline TrainHistory fit(SkipcrossNet& net, const std::vector<Sample>& train_set,
                        const std::vector<Sample>& val_set,
                        const TrainConfig& cfg,
                        const EpochCallback& callback = {}) {
  cfg.validate();
  if (train_set.empty() || val_set.empty()) {
    throw DataError("fit needs non-empty train and validation sets");
  }

  Adam optimizer = Adam::for_net(net, cfg.lr);
  Rng rng(cfg.seed);
  TrainHistory history;
  constexpr double kMinImprovement = 1e-4;
  int epochs_since_improvement = 0;

  std::vector<size_t> order(train_set.size());
  for (size_t i = 0; i < order.size(); ++i) order[i] = i;

  for (int epoch = 0; epoch < cfg.max_epochs; ++epoch) {
    const auto t0 = std::chrono::steady_clock::now();
    rng.shuffle(order);

    double loss_sum = 0.0;
    int64_t steps = 0;
    for (size_t start = 0; start < order.size();
         start += static_cast<size_t>(cfg.batch_size)) {
      std::vector<Sample> prepared;
      for (size_t i = start;
           i < std::min(order.size(), start + static_cast<size_t>(cfg.batch_size));
           ++i) {
        prepared.push_back(augment(train_set[order[i]], cfg, rng));
      }
      std::vector<const Sample*> ptrs;
      for (const Sample& s : prepared) ptrs.push_back(&s);
      loss_sum += train_step(net, make_batch(ptrs), optimizer, cfg.camera_only);
      ++steps;
    }

    const ValScore val =
        evaluate_maxf(net, val_set, cfg.batch_size, cfg.camera_only);

    EpochRecord rec;
    rec.epoch = epoch;
    rec.train_loss = loss_sum / static_cast<double>(steps);
    rec.val_maxf = val.maxf;
    rec.val_accuracy = val.accuracy;
    rec.lr = optimizer.lr();
    rec.seconds = std::chrono::duration<double>(
                      std::chrono::steady_clock::now() - t0)
                      .count();
    history.epochs.push_back(rec);

    if (history.best_epoch < 0 || val.maxf > history.best_maxf + kMinImprovement) {
      history.best_maxf = val.maxf;
      history.best_epoch = epoch;
      history.best_weights = save_weights_to_string(net);
      epochs_since_improvement = 0;
    } else {
      ++epochs_since_improvement;
      if (epochs_since_improvement >= cfg.plateau_patience) {
        optimizer.set_lr(std::max(cfg.min_lr, optimizer.lr() * cfg.lr_decay));
        epochs_since_improvement = 0;
      }
    }

    if (callback && !callback(rec)) break;
  }
  return history;
}

inline std::string history_csv(const TrainHistory& history) {
  std::string out = "epoch,loss,val_maxf,lr,seconds\n";
  char line[160];
  for (const EpochRecord& r : history.epochs) {
    std::snprintf(line, sizeof(line), "%d,%.9g,%.9g,%.9g,%.3f\n", r.epoch,
                  r.train_loss, r.val_maxf, static_cast<double>(r.lr),
                  r.seconds);
    out += line;
  }
  return out;
}

}  // namespace skipcross
