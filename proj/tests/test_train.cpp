#include "skipcross/train.hpp"

#include <gtest/gtest.h>

#include <cmath>
#include <cstring>
#include <limits>

#include "skipcross/checkpoint.hpp"

namespace skipcross {
namespace {

FusionTopology tiny_topology(FusionStrategy strategy = FusionStrategy::skipcross) {
  FusionTopology topo;
  topo.stage_blocks = {1, 1};
  topo.stage_channels = {4, 6};
  topo.rgb_in_channels = 3;
  topo.lidar_in_channels = 1;
  return configure_strategy(strategy, topo);
}

// Sample whose mask is the left half of the image; rgb channel 0 carries the
// same signal so even a tiny network can separate the classes.
Sample half_road_sample(Rng& rng, int h, int w, const std::string& id) {
  Sample s;
  s.id = id;
  s.rgb = Image(3, h, w);
  s.adi = Image(1, h, w);
  s.mask = Mask(h, w);
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      const bool road = x < w / 2;
      s.mask.at(y, x) = road ? 1 : 0;
      s.rgb.at(0, y, x) = road ? 0.9f : 0.1f;
      s.rgb.at(1, y, x) = static_cast<float>(0.5 + 0.1 * rng.normal());
      s.rgb.at(2, y, x) = static_cast<float>(0.5 + 0.1 * rng.normal());
      s.adi.at(0, y, x) = road ? 0.05f : 0.8f;
    }
  }
  for (float& p : s.rgb.data) p = std::clamp(p, 0.0f, 1.0f);
  return s;
}

std::vector<Sample> half_road_set(uint64_t seed, int count, int h, int w) {
  Rng rng(seed);
  std::vector<Sample> out;
  for (int i = 0; i < count; ++i) {
    out.push_back(half_road_sample(rng, h, w, "s" + std::to_string(i)));
  }
  return out;
}

TrainConfig quiet_config() {
  TrainConfig cfg;
  cfg.crop_h = 32;
  cfg.crop_w = 32;
  cfg.batch_size = 2;
  return cfg;
}

bool images_equal(const Image& a, const Image& b) {
  return a.channels == b.channels && a.height == b.height && a.width == b.width &&
         std::memcmp(a.data.data(), b.data.data(), a.data.size() * sizeof(float)) == 0;
}

bool masks_equal(const Mask& a, const Mask& b) {
  return a.height == b.height && a.width == b.width && a.data == b.data;
}

// --------------------------------------------------------------------------
// optimizer
// --------------------------------------------------------------------------

TEST(Adam, SingleStepMatchesHandComputation) {
  Tensor p = Tensor::scalar(0.5f, true);
  Adam opt({p}, 0.001f);
  p.grad()[0] = 0.2f;
  opt.step();

  const float m = 0.1f * 0.2f;
  const float v = 0.001f * 0.04f;
  const float mhat = m / 0.1f;
  const float vhat = v / 0.001f;
  const float expected = 0.5f - 0.001f * mhat / (std::sqrt(vhat) + 1e-8f);
  EXPECT_EQ(p.item(), expected);
  EXPECT_EQ(opt.step_count(), 1);
}

TEST(Adam, ZeroGradientLeavesParameterBitwiseUnchanged) {
  Tensor p = Tensor::from({3}, {0.25f, -1.5f, 7.75f}, true);
  Tensor q = Tensor::scalar(0.125f, true);
  std::vector<float> before(p.values().begin(), p.values().end());

  Adam opt({p, q}, 0.01f);
  q.grad()[0] = 1.0f;  // only q gets a gradient
  for (int i = 0; i < 5; ++i) opt.step();

  for (size_t i = 0; i < before.size(); ++i) {
    EXPECT_EQ(p.values()[i], before[i]) << "coordinate " << i;
  }
  EXPECT_NE(q.item(), 0.125f);
}

TEST(Adam, ConvergesOnQuadratic) {
  // minimize sum_i (p_i - t_i)^2 by feeding its gradient directly
  Tensor p = Tensor::from({3}, {4.0f, -3.0f, 0.5f}, true);
  const float target[3] = {1.0f, 2.0f, -1.0f};
  Adam opt({p}, 0.05f);
  for (int step = 0; step < 400; ++step) {
    auto g = p.grad();
    for (int i = 0; i < 3; ++i) g[i] = 2.0f * (p.values()[i] - target[i]);
    opt.step();
  }
  for (int i = 0; i < 3; ++i) {
    EXPECT_NEAR(p.values()[i], target[i], 1e-2) << "coordinate " << i;
  }
}

TEST(Adam, SetLrTakesEffect) {
  Tensor p = Tensor::scalar(1.0f, true);
  Adam opt({p}, 0.1f);
  EXPECT_FLOAT_EQ(opt.lr(), 0.1f);
  opt.set_lr(0.01f);
  EXPECT_FLOAT_EQ(opt.lr(), 0.01f);
}

// --------------------------------------------------------------------------
// augmentation
// --------------------------------------------------------------------------

TEST(Augment, AllFlagsOffAtTargetSizeIsIdentity) {
  Rng rng(3);
  const Sample s = half_road_sample(rng, 32, 32, "a");
  TrainConfig cfg = quiet_config();
  Rng arng(7);
  const Sample out = augment(s, cfg, arng);
  EXPECT_TRUE(images_equal(out.rgb, s.rgb));
  EXPECT_TRUE(images_equal(out.adi, s.adi));
  EXPECT_TRUE(masks_equal(out.mask, s.mask));
}

TEST(Augment, AllFlagsOffResizesToTargetSize) {
  Rng rng(3);
  const Sample s = half_road_sample(rng, 48, 64, "a");
  TrainConfig cfg = quiet_config();
  Rng arng(7);
  const Sample out = augment(s, cfg, arng);
  EXPECT_EQ(out.height(), 32);
  EXPECT_EQ(out.width(), 32);
  EXPECT_TRUE(images_equal(out.rgb, resize_bilinear(s.rgb, 32, 32)));
  EXPECT_TRUE(images_equal(out.adi, resize_bilinear(s.adi, 32, 32)));
  EXPECT_TRUE(masks_equal(out.mask, resize_nearest(s.mask, 32, 32)));
}

TEST(Augment, SameSeedSameOutput) {
  Rng rng(11);
  const Sample s = half_road_sample(rng, 64, 64, "a");
  TrainConfig cfg = quiet_config();
  cfg.augment_multiscale = true;
  cfg.augment_crop = true;
  cfg.augment_brightness = true;
  cfg.augment_road_removal = true;

  Rng r1(99), r2(99), r3(100);
  const Sample a = augment(s, cfg, r1);
  const Sample b = augment(s, cfg, r2);
  EXPECT_TRUE(images_equal(a.rgb, b.rgb));
  EXPECT_TRUE(images_equal(a.adi, b.adi));
  EXPECT_TRUE(masks_equal(a.mask, b.mask));

  bool any_differs = false;
  for (int trial = 0; trial < 8 && !any_differs; ++trial) {
    Rng rt(100 + static_cast<uint64_t>(trial));
    const Sample c = augment(s, cfg, rt);
    any_differs = !images_equal(a.rgb, c.rgb);
  }
  EXPECT_TRUE(any_differs);
  (void)r3;
}

TEST(Augment, CropKeepsModalitiesAligned) {
  // encode the absolute pixel coordinate in both modalities
  Sample s;
  s.id = "coords";
  s.rgb = Image(3, 64, 96);
  s.adi = Image(1, 64, 96);
  s.mask = Mask(64, 96);
  for (int y = 0; y < 64; ++y) {
    for (int x = 0; x < 96; ++x) {
      const float code = static_cast<float>(y * 96 + x) / (64.0f * 96.0f);
      s.rgb.at(0, y, x) = code;
      s.adi.at(0, y, x) = code;
      s.mask.at(y, x) = static_cast<uint8_t>((x + y) % 2);
    }
  }

  TrainConfig cfg = quiet_config();
  cfg.augment_crop = true;
  Rng rng(5);
  const Sample out = augment(s, cfg, rng);
  ASSERT_EQ(out.height(), 32);
  ASSERT_EQ(out.width(), 32);

  // recover the offset from the first pixel, then check every other pixel
  const int code0 = static_cast<int>(std::lround(out.rgb.at(0, 0, 0) * 64 * 96));
  const int oy = code0 / 96, ox = code0 % 96;
  EXPECT_LE(oy, 32);
  EXPECT_LE(ox, 64);
  for (int y = 0; y < 32; ++y) {
    for (int x = 0; x < 32; ++x) {
      EXPECT_EQ(out.rgb.at(0, y, x), out.adi.at(0, y, x));
      EXPECT_EQ(out.mask.at(y, x), static_cast<uint8_t>((ox + x + oy + y) % 2));
    }
  }
}

TEST(Augment, CropLargerThanSampleThrows) {
  Rng rng(3);
  const Sample s = half_road_sample(rng, 32, 32, "a");
  TrainConfig cfg = quiet_config();
  cfg.crop_h = 64;
  cfg.crop_w = 64;
  cfg.augment_crop = true;
  Rng arng(1);
  EXPECT_THROW(augment(s, cfg, arng), DataError);
}

TEST(Augment, BrightnessOnlyTouchesRgb) {
  Rng rng(21);
  const Sample s = half_road_sample(rng, 32, 32, "a");
  TrainConfig cfg = quiet_config();
  cfg.augment_brightness = true;
  Rng arng(2);
  const Sample out = augment(s, cfg, arng);

  EXPECT_TRUE(images_equal(out.adi, s.adi));
  EXPECT_TRUE(masks_equal(out.mask, s.mask));
  EXPECT_FALSE(images_equal(out.rgb, s.rgb));
  float lo = 1.0f, hi = 0.0f;
  for (float p : out.rgb.data) {
    lo = std::min(lo, p);
    hi = std::max(hi, p);
  }
  EXPECT_GE(lo, 0.0f);
  EXPECT_LE(hi, 1.0f);

  // recover the factor from an interior pixel and spot-check the rest
  double factor = 0.0;
  for (size_t i = 0; i < s.rgb.data.size(); ++i) {
    if (s.rgb.data[i] > 0.05f && out.rgb.data[i] < 0.999f) {
      factor = static_cast<double>(out.rgb.data[i]) / s.rgb.data[i];
      break;
    }
  }
  ASSERT_GT(factor, 0.0);
  EXPECT_GE(factor, 0.6 - 1e-5);
  EXPECT_LE(factor, 1.4 + 1e-5);
  for (size_t i = 0; i < s.rgb.data.size(); i += 17) {
    const float expect = std::clamp(
        static_cast<float>(s.rgb.data[i] * factor), 0.0f, 1.0f);
    EXPECT_NEAR(out.rgb.data[i], expect, 1e-5f);
  }
}

TEST(Augment, RoadRemovalErasesASolidRectangleOverRoad) {
  Rng rng(31);
  const Sample s = half_road_sample(rng, 32, 32, "a");
  TrainConfig cfg = quiet_config();
  cfg.augment_road_removal = true;

  bool triggered = false;
  for (uint64_t seed = 0; seed < 20 && !triggered; ++seed) {
    Rng arng(seed);
    const Sample out = augment(s, cfg, arng);
    EXPECT_TRUE(images_equal(out.adi, s.adi));
    EXPECT_TRUE(masks_equal(out.mask, s.mask));
    if (images_equal(out.rgb, s.rgb)) continue;  // the coin said no this time
    triggered = true;

    int y0 = 32, y1 = -1, x0 = 32, x1 = -1, changed = 0;
    for (int y = 0; y < 32; ++y) {
      for (int x = 0; x < 32; ++x) {
        bool diff = false;
        for (int c = 0; c < 3; ++c) {
          diff = diff || out.rgb.at(c, y, x) != s.rgb.at(c, y, x);
        }
        if (diff) {
          ++changed;
          y0 = std::min(y0, y);
          y1 = std::max(y1, y);
          x0 = std::min(x0, x);
          x1 = std::max(x1, x);
        }
      }
    }
    ASSERT_GT(changed, 0);
    // solid axis-aligned rectangle, filled with one value per channel
    EXPECT_EQ(changed, (y1 - y0 + 1) * (x1 - x0 + 1));
    for (int c = 0; c < 3; ++c) {
      const float fill = out.rgb.at(c, y0, x0);
      for (int y = y0; y <= y1; ++y) {
        for (int x = x0; x <= x1; ++x) EXPECT_EQ(out.rgb.at(c, y, x), fill);
      }
    }
    const double frac = static_cast<double>(changed) / (32.0 * 32.0);
    EXPECT_GE(frac, 0.03);
    EXPECT_LE(frac, 0.20);
    bool touches_road = false;
    for (int y = y0; y <= y1 && !touches_road; ++y) {
      for (int x = x0; x <= x1 && !touches_road; ++x) {
        touches_road = s.mask.at(y, x) != 0;
      }
    }
    EXPECT_TRUE(touches_road);
  }
  EXPECT_TRUE(triggered);
}

TEST(Augment, MultiscaleProducesScaledShapesBeforeResize) {
  Rng rng(41);
  const Sample s = half_road_sample(rng, 64, 64, "a");
  TrainConfig cfg = quiet_config();
  cfg.augment_multiscale = true;
  // without cropping the result lands back at the target size
  Rng arng(9);
  const Sample out = augment(s, cfg, arng);
  EXPECT_EQ(out.height(), 32);
  EXPECT_EQ(out.width(), 32);
  out.validate();
}

// --------------------------------------------------------------------------
// batching / steps
// --------------------------------------------------------------------------

TEST(Batch, PacksSamplesInOrder) {
  auto samples = half_road_set(5, 3, 32, 32);
  std::vector<const Sample*> ptrs{&samples[0], &samples[1], &samples[2]};
  const Batch b = make_batch(ptrs);
  EXPECT_EQ(b.rgb.shape(), (Shape{3, 3, 32, 32}));
  EXPECT_EQ(b.adi.shape(), (Shape{3, 1, 32, 32}));
  EXPECT_EQ(b.labels.size(), 3u * 32 * 32);
  EXPECT_EQ(b.rgb.values()[0], samples[0].rgb.data[0]);
  const int64_t plane = 32 * 32;
  EXPECT_EQ(b.adi.values()[static_cast<size_t>(2 * plane + 5)],
            samples[2].adi.data[5]);
  EXPECT_EQ(b.labels[static_cast<size_t>(plane + 40)],
            static_cast<int>(samples[1].mask.data[40]));
}

TEST(Batch, RejectsMixedSizesAndEmpty) {
  auto a = half_road_set(5, 1, 32, 32);
  auto b = half_road_set(5, 1, 64, 64);
  std::vector<const Sample*> mixed{&a[0], &b[0]};
  EXPECT_THROW(make_batch(mixed), ShapeError);
  EXPECT_THROW(make_batch({}), UsageError);
}

TEST(TrainStep, ReducesLossOnSeparableData) {
  auto net = SkipcrossNet::build(tiny_topology(), 7);
  auto samples = half_road_set(5, 2, 32, 32);
  std::vector<const Sample*> ptrs{&samples[0], &samples[1]};
  const Batch batch = make_batch(ptrs);

  Adam opt = Adam::for_net(net, 5e-3f);
  const float first = train_step(net, batch, opt);
  float last = first;
  for (int i = 0; i < 39; ++i) last = train_step(net, batch, opt);
  EXPECT_LT(last, 0.5f * first);
  EXPECT_NEAR(first, std::log(2.0f), 0.2f);  // ~chance at init
}

TEST(TrainStep, NonFiniteLossThrowsNumericError) {
  auto net = SkipcrossNet::build(tiny_topology(), 7);
  // poison a parameter that feeds the logits directly; anything earlier is
  // clamped away by the rectifiers (relu(NaN) = 0 under x > 0 ? x : 0)
  Tensor b = net.param("dec.cls.b");
  for (int64_t i = 0; i < b.numel(); ++i) {
    b.data()[i] = std::numeric_limits<float>::quiet_NaN();
  }
  auto samples = half_road_set(5, 1, 32, 32);
  std::vector<const Sample*> ptrs{&samples[0]};
  const Batch batch = make_batch(ptrs);
  Adam opt = Adam::for_net(net, 1e-3f);
  EXPECT_THROW(train_step(net, batch, opt), NumericError);
}

TEST(TrainStep, CameraOnlyIgnoresLidarInput) {
  auto net = SkipcrossNet::build(tiny_topology(), 7);
  auto samples = half_road_set(5, 1, 32, 32);
  Sample poisoned = samples[0];
  for (float& v : poisoned.adi.data) v = std::numeric_limits<float>::quiet_NaN();
  std::vector<const Sample*> ptrs{&poisoned};
  const Batch batch = make_batch(ptrs);
  Adam opt = Adam::for_net(net, 1e-3f);
  const float loss = train_step(net, batch, opt, /*camera_only=*/true);
  EXPECT_TRUE(std::isfinite(loss));
}

// --------------------------------------------------------------------------
// fit
// --------------------------------------------------------------------------

TEST(Fit, ZeroEpochsLeavesNetUntouched) {
  auto net = SkipcrossNet::build(tiny_topology(), 7);
  const std::string before = save_weights_to_string(net);
  TrainConfig cfg = quiet_config();
  cfg.max_epochs = 0;
  auto train = half_road_set(5, 2, 32, 32);
  auto val = half_road_set(6, 2, 32, 32);
  const TrainHistory h = fit(net, train, val, cfg);
  EXPECT_TRUE(h.epochs.empty());
  EXPECT_EQ(h.best_epoch, -1);
  EXPECT_TRUE(h.best_weights.empty());
  EXPECT_EQ(save_weights_to_string(net), before);
}

TEST(Fit, SameSeedIsBitwiseReproducible) {
  TrainConfig cfg = quiet_config();
  cfg.max_epochs = 3;
  cfg.seed = 17;
  cfg.augment_multiscale = true;
  cfg.augment_brightness = true;
  auto train = half_road_set(5, 4, 32, 32);
  auto val = half_road_set(6, 2, 32, 32);

  auto net1 = SkipcrossNet::build(tiny_topology(), 11);
  auto net2 = SkipcrossNet::build(tiny_topology(), 11);
  const TrainHistory h1 = fit(net1, train, val, cfg);
  const TrainHistory h2 = fit(net2, train, val, cfg);

  ASSERT_EQ(h1.epochs.size(), h2.epochs.size());
  for (size_t i = 0; i < h1.epochs.size(); ++i) {
    EXPECT_EQ(h1.epochs[i].train_loss, h2.epochs[i].train_loss) << i;
    EXPECT_EQ(h1.epochs[i].val_maxf, h2.epochs[i].val_maxf) << i;
    EXPECT_EQ(h1.epochs[i].lr, h2.epochs[i].lr) << i;
  }
  EXPECT_EQ(save_weights_to_string(net1), save_weights_to_string(net2));
  EXPECT_EQ(h1.best_weights, h2.best_weights);
}

TEST(Fit, PlateauDecaysLearningRateOnSchedule) {
  // learning rate so small that float updates round away: the validation
  // score repeats exactly, so every epoch after the first is a plateau
  TrainConfig cfg = quiet_config();
  cfg.lr = 1e-20f;
  cfg.lr_decay = 0.5f;
  cfg.min_lr = 1e-30f;
  cfg.plateau_patience = 2;
  cfg.max_epochs = 6;
  auto train = half_road_set(5, 2, 32, 32);
  auto val = half_road_set(6, 2, 32, 32);
  auto net = SkipcrossNet::build(tiny_topology(), 11);

  const TrainHistory h = fit(net, train, val, cfg);
  ASSERT_EQ(h.epochs.size(), 6u);
  const float L = 1e-20f;
  EXPECT_EQ(h.epochs[0].lr, L);
  EXPECT_EQ(h.epochs[1].lr, L);
  EXPECT_EQ(h.epochs[2].lr, L);          // decay fires at the end of epoch 2
  EXPECT_EQ(h.epochs[3].lr, 0.5f * L);
  EXPECT_EQ(h.epochs[4].lr, 0.5f * L);
  EXPECT_EQ(h.epochs[5].lr, 0.25f * L);
  EXPECT_EQ(h.best_epoch, 0);
  for (size_t i = 1; i < h.epochs.size(); ++i) {
    EXPECT_LE(h.epochs[i].lr, h.epochs[i - 1].lr);
  }
}

TEST(Fit, LearningRateNeverDropsBelowFloor) {
  TrainConfig cfg = quiet_config();
  cfg.lr = 1e-20f;
  cfg.lr_decay = 0.1f;
  cfg.min_lr = 5e-21f;
  cfg.plateau_patience = 1;
  cfg.max_epochs = 4;
  auto train = half_road_set(5, 2, 32, 32);
  auto val = half_road_set(6, 2, 32, 32);
  auto net = SkipcrossNet::build(tiny_topology(), 11);

  const TrainHistory h = fit(net, train, val, cfg);
  ASSERT_EQ(h.epochs.size(), 4u);
  EXPECT_EQ(h.epochs.back().lr, 5e-21f);
}

TEST(Fit, CallbackCanStopTraining) {
  TrainConfig cfg = quiet_config();
  cfg.max_epochs = 50;
  auto train = half_road_set(5, 2, 32, 32);
  auto val = half_road_set(6, 2, 32, 32);
  auto net = SkipcrossNet::build(tiny_topology(), 11);

  int seen = 0;
  const TrainHistory h = fit(net, train, val, cfg, [&](const EpochRecord& r) {
    ++seen;
    EXPECT_EQ(r.epoch, seen - 1);
    return seen < 2;
  });
  EXPECT_EQ(seen, 2);
  EXPECT_EQ(h.epochs.size(), 2u);
}

TEST(Fit, BestWeightsReloadAndScoreBest) {
  TrainConfig cfg = quiet_config();
  cfg.max_epochs = 5;
  cfg.lr = 5e-3f;
  auto train = half_road_set(5, 4, 32, 32);
  auto val = half_road_set(6, 2, 32, 32);
  auto net = SkipcrossNet::build(tiny_topology(), 11);

  const TrainHistory h = fit(net, train, val, cfg);
  ASSERT_EQ(h.epochs.size(), 5u);
  ASSERT_GE(h.best_epoch, 0);
  ASSERT_FALSE(h.best_weights.empty());

  double best_seen = 0.0;
  for (const EpochRecord& r : h.epochs) best_seen = std::max(best_seen, r.val_maxf);
  EXPECT_GE(h.best_maxf, best_seen - 1e-4 - 1e-12);

  auto restored = load_weights_from_string(h.best_weights);
  const ValScore score = evaluate_maxf(restored, val, cfg.batch_size);
  EXPECT_EQ(score.maxf, h.best_maxf);
}

TEST(Fit, LossFallsAndScoreRisesOnSeparableData) {
  TrainConfig cfg = quiet_config();
  cfg.max_epochs = 40;
  cfg.lr = 1e-2f;
  cfg.seed = 3;
  auto train = half_road_set(5, 4, 32, 32);
  auto val = half_road_set(6, 2, 32, 32);
  // a decoder head this narrow can lose an entire upsampling parity to dead
  // rectifier cells and floor early; three final channels train reliably
  FusionTopology topo = tiny_topology();
  topo.stage_channels = {6, 9};
  auto net = SkipcrossNet::build(topo, 11);

  const TrainHistory h = fit(net, train, val, cfg);
  EXPECT_LT(h.epochs.back().train_loss, 0.4 * h.epochs.front().train_loss);
  EXPECT_GT(h.best_maxf, 0.9);
}

TEST(History, CsvHasHeaderAndOneRowPerEpoch) {
  TrainHistory h;
  for (int i = 0; i < 3; ++i) {
    EpochRecord r;
    r.epoch = i;
    r.train_loss = 0.5 - 0.1 * i;
    r.val_maxf = 0.7 + 0.05 * i;
    r.lr = 1e-3f;
    r.seconds = 0.25;
    h.epochs.push_back(r);
  }
  const std::string csv = history_csv(h);
  EXPECT_EQ(csv.rfind("epoch,loss,val_maxf,lr,seconds\n", 0), 0u);
  int lines = 0;
  for (char c : csv) lines += c == '\n';
  EXPECT_EQ(lines, 4);
  EXPECT_NE(csv.find("\n1,"), std::string::npos);
}

TEST(Eval, DatasetReportMatchesMaxfHelper) {
  auto net = SkipcrossNet::build(tiny_topology(), 7);
  auto val = half_road_set(6, 3, 32, 32);
  const ValScore score = evaluate_maxf(net, val, 2);
  const MetricsReport report = evaluate_dataset(net, val, 2);
  EXPECT_EQ(score.maxf, report.maxf);
  EXPECT_GE(score.accuracy, 0.0);
  EXPECT_LE(score.accuracy, 1.0);
}

TEST(Config, ValidateRejectsBadValues) {
  TrainConfig cfg = quiet_config();
  cfg.validate();
  TrainConfig bad = cfg;
  bad.lr = 0.0f;
  EXPECT_THROW(bad.validate(), ConfigError);
  bad = cfg;
  bad.batch_size = 0;
  EXPECT_THROW(bad.validate(), ConfigError);
  bad = cfg;
  bad.lr_decay = 1.0f;
  EXPECT_THROW(bad.validate(), ConfigError);
  bad = cfg;
  bad.crop_h = 20;
  EXPECT_THROW(bad.validate(), ConfigError);
  bad = cfg;
  bad.plateau_patience = 0;
  EXPECT_THROW(bad.validate(), ConfigError);
}

}  // namespace
}  // namespace skipcross
