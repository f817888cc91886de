#include <catch2/catch_amalgamated.hpp>
#include <cmath>

#include "camo/detector.hpp"
#include "camo/grad_check.hpp"
#include "camo/weights_io.hpp"
#include "support/oracles.hpp"

using camo::BoundingBox;
using camo::Detection;
using camo::DetectorConfig;
using camo::Rng;
using camo::Shape;
using camo::Tensor;

namespace {

DetectorConfig tiny_config() {
  DetectorConfig c;
  c.input_size = 16;
  c.grid_size = 4;
  c.num_anchors = 2;
  c.anchor_sizes = {{0.2f, 0.2f}, {0.5f, 0.5f}};
  c.num_classes = 3;
  c.conv_channels = {4, 8};
  return c;
}

template <typename T>
void zero_all(camo::DetectorWeightsT<T>& w) {
  for (auto& [name, t] : w.tensors)
    std::fill(t.values_mut().begin(), t.values_mut().end(), T(0));
}

// Exhaustive suppression: repeatedly take the best remaining detection and
// delete everything of the same class it overlaps.
std::vector<Detection> nms_oracle(std::vector<Detection> dets,
                                  double iou_thresh) {
  std::vector<Detection> kept;
  std::vector<char> alive(dets.size(), 1);
  for (;;) {
    int best = -1;
    for (std::size_t i = 0; i < dets.size(); ++i)
      if (alive[i] && (best < 0 || dets[i].score > dets[best].score))
        best = static_cast<int>(i);
    if (best < 0) break;
    alive[best] = 0;
    kept.push_back(dets[best]);
    for (std::size_t j = 0; j < dets.size(); ++j)
      if (alive[j] && dets[j].class_id == dets[best].class_id &&
          camo::iou(dets[best].box, dets[j].box) >= iou_thresh)
        alive[j] = 0;
  }
  return kept;
}

}  // namespace

TEST_CASE("zero weights on a zero image give all-zero logits") {
  auto cfg = tiny_config();
  auto w = camo::init_weights<float>(cfg, 1);
  zero_all(w);
  Tensor<float> image(Shape{3, 16, 16}, 0.0f);
  auto pred = camo::forward(w, image);
  for (float v : pred.raw.values()) CHECK(v == 0.0f);
  // objectness after sigmoid = 0.5 everywhere
  auto dets = camo::decode(pred, 0.0, cfg);
  for (const auto& d : dets) CHECK(d.objectness == Catch::Approx(0.5));
}

TEST_CASE("forward is deterministic for fixed weights and input") {
  auto cfg = tiny_config();
  auto w = camo::init_weights<float>(cfg, 7);
  Rng rng(3);
  auto image = oracle::random_tensor<float>(Shape{3, 16, 16}, rng, 0.0, 1.0);
  auto a = camo::forward(w, image);
  auto b = camo::forward(w, image);
  CHECK(a.raw.values() == b.raw.values());
}

TEST_CASE("forward rejects wrong input size") {
  auto w = camo::init_weights<float>(tiny_config(), 1);
  CHECK_THROWS_AS(camo::forward(w, Tensor<float>(Shape{3, 8, 8}, 0.0f)),
                  camo::DimError);
}

TEST_CASE("gradient of summed objectness w.r.t. image passes finite differences") {
  auto cfg = tiny_config();
  auto w = camo::init_weights<double>(cfg, 11);
  Rng rng(5);
  auto image = oracle::random_tensor<double>(Shape{3, 16, 16}, rng, 0.0, 1.0);
  const double err = camo::grad_check(
      [&](const Tensor<double>& img) {
        auto pred = camo::forward(w, img);
        return camo::sum(camo::sigmoid(camo::select_last(pred.raw, 4)));
      },
      image, 1e-5);
  CHECK(err < 1e-4);
}

TEST_CASE("decode thresholds and centers") {
  auto cfg = tiny_config();
  const int S = cfg.grid_size, B = cfg.num_anchors, C = cfg.channels_per_anchor();

  SECTION("all objectness at -20 decodes to nothing at 0.25") {
    std::vector<float> raw(S * S * B * C, 0.0f);
    for (std::size_t i = 4; i < raw.size(); i += C) raw[i] = -20.0f;
    camo::GridPrediction pred{Tensor<float>(Shape{S, S, B, C}, raw)};
    CHECK(camo::decode(pred, 0.25, cfg).empty());
  }

  SECTION("one hot cell decodes centered at (cell+0.5)/S") {
    std::vector<float> raw(S * S * B * C, 0.0f);
    for (std::size_t i = 4; i < raw.size(); i += C) raw[i] = -20.0f;
    const int y = 2, x = 1, b = 0;
    raw[((y * S + x) * B + b) * C + 4] = 20.0f;  // tx=ty=0 -> sigmoid 0.5
    camo::GridPrediction pred{Tensor<float>(Shape{S, S, B, C}, raw)};
    auto dets = camo::decode(pred, 0.2, cfg);
    REQUIRE(dets.size() == 1);
    CHECK(dets[0].box.cx == Catch::Approx((x + 0.5) / S));
    CHECK(dets[0].box.cy == Catch::Approx((y + 0.5) / S));
    CHECK(dets[0].box.w == Catch::Approx(cfg.anchor_sizes[0].first));
  }

  SECTION("conf_thresh outside [0,1] is rejected") {
    camo::GridPrediction pred{Tensor<float>(Shape{S, S, B, C}, 0.0f)};
    CHECK_THROWS_AS(camo::decode(pred, -0.1, cfg), camo::ParamError);
  }
}

TEST_CASE("encode then decode recovers ground truth boxes") {
  auto cfg = tiny_config();
  Rng rng(19);
  for (int trial = 0; trial < 20; ++trial) {
    std::vector<BoundingBox> truths;
    const int n = rng.uniform_int(1, 3);
    for (int i = 0; i < n; ++i) {
      BoundingBox b;
      b.class_id = rng.uniform_int(0, cfg.num_classes - 1);
      b.w = static_cast<float>(rng.uniform(0.1, 0.45));
      b.h = static_cast<float>(rng.uniform(0.1, 0.45));
      b.cx = static_cast<float>(rng.uniform(b.w / 2, 1.0 - b.w / 2));
      b.cy = static_cast<float>(rng.uniform(b.h / 2, 1.0 - b.h / 2));
      truths.push_back(b);
    }
    auto pred = camo::encode<float>(truths, cfg);
    auto dets = camo::decode(pred, 0.5, cfg);
    REQUIRE(dets.size() == truths.size());
    for (const auto& t : truths) {
      double best = 1e9;
      const Detection* hit = nullptr;
      for (const auto& d : dets) {
        const double dd = std::abs(d.box.cx - t.cx) + std::abs(d.box.cy - t.cy);
        if (dd < best) {
          best = dd;
          hit = &d;
        }
      }
      REQUIRE(hit != nullptr);
      CHECK(std::abs(hit->box.cx - t.cx) < 1e-6);
      CHECK(std::abs(hit->box.cy - t.cy) < 1e-6);
      CHECK(std::abs(hit->box.w - t.w) < 1e-6);
      CHECK(std::abs(hit->box.h - t.h) < 1e-6);
      CHECK(hit->class_id == t.class_id);
    }
  }
}

TEST_CASE("nms basics") {
  Detection a, b;
  a.box = {0, 0.5f, 0.5f, 0.2f, 0.2f, -1.0f};
  a.class_id = 0;
  a.score = 0.9;
  b = a;
  b.score = 0.8;

  SECTION("identical boxes keep only the best") {
    auto kept = camo::nms({a, b}, 0.5);
    REQUIRE(kept.size() == 1);
    CHECK(kept[0].score == 0.9);
  }
  SECTION("disjoint boxes all survive") {
    b.box.cx = 0.1f;
    b.box.cy = 0.1f;
    auto kept = camo::nms({a, b}, 0.5);
    CHECK(kept.size() == 2);
  }
  SECTION("different classes never suppress each other") {
    b.class_id = 1;
    b.box.class_id = 1;
    auto kept = camo::nms({a, b}, 0.5);
    CHECK(kept.size() == 2);
  }
  SECTION("iou_thresh outside (0,1] is rejected") {
    CHECK_THROWS_AS(camo::nms({a}, 0.0), camo::ParamError);
    CHECK_THROWS_AS(camo::nms({a}, 1.5), camo::ParamError);
  }
}

TEST_CASE("nms equals the exhaustive suppression oracle on random sets") {
  Rng rng(101);
  for (int trial = 0; trial < 50; ++trial) {
    std::vector<Detection> dets;
    const int n = 20;
    for (int i = 0; i < n; ++i) {
      Detection d;
      d.class_id = rng.uniform_int(0, 2);
      d.box.class_id = d.class_id;
      d.box.w = static_cast<float>(rng.uniform(0.05, 0.4));
      d.box.h = static_cast<float>(rng.uniform(0.05, 0.4));
      d.box.cx = static_cast<float>(rng.uniform(0.2, 0.8));
      d.box.cy = static_cast<float>(rng.uniform(0.2, 0.8));
      d.score = rng.uniform(0.01, 1.0);
      dets.push_back(d);
    }
    const double thresh = rng.uniform(0.2, 0.8);
    auto fast = camo::nms(dets, thresh);
    auto slow = nms_oracle(dets, thresh);
    REQUIRE(fast.size() == slow.size());
    for (std::size_t i = 0; i < fast.size(); ++i) {
      CHECK(fast[i].score == slow[i].score);
      CHECK(fast[i].box.cx == slow[i].box.cx);
    }
  }
}

TEST_CASE("detection loss limits") {
  auto cfg = tiny_config();
  const int S = cfg.grid_size, B = cfg.num_anchors, C = cfg.channels_per_anchor();

  SECTION("no truth and suppressed objectness is nearly free") {
    std::vector<float> raw(S * S * B * C, 0.0f);
    for (std::size_t i = 4; i < raw.size(); i += C) raw[i] = -20.0f;
    camo::GridPrediction pred{Tensor<float>(Shape{S, S, B, C}, raw)};
    auto loss = camo::detection_loss(pred, {}, cfg);
    CHECK(loss.item() < 0.01f);
  }

  SECTION("perfect encoded prediction has tiny coord and class terms") {
    std::vector<BoundingBox> truths;
    BoundingBox t;
    t.class_id = 1;
    t.cx = 0.62f;
    t.cy = 0.37f;
    t.w = 0.25f;
    t.h = 0.18f;
    truths.push_back(t);
    auto pred = camo::encode<float>(truths, cfg);
    auto parts = camo::detection_loss_parts(pred, truths, cfg);
    CHECK(parts.coord < 1e-6);
    CHECK(parts.cls < 1e-5);
  }

  SECTION("loss gradient w.r.t. raw prediction passes finite differences") {
    Rng rng(55);
    std::vector<BoundingBox> truths;
    BoundingBox t;
    t.class_id = 2;
    t.cx = 0.31f;
    t.cy = 0.72f;
    t.w = 0.3f;
    t.h = 0.22f;
    truths.push_back(t);
    auto raw = oracle::random_tensor<double>(Shape{S, S, B, C}, rng, -1.0, 1.0);
    DetectorConfig dcfg = cfg;
    const double err = camo::grad_check(
        [&](const Tensor<double>& r) {
          camo::GridPredictionT<double> p{r};
          return camo::detection_loss(p, truths, dcfg);
        },
        raw);
    CHECK(err < 1e-4);
  }
}

TEST_CASE("fifty steps on one image mostly decrease the loss") {
  auto cfg = tiny_config();
  Rng rng(77);
  camo::LabeledImage li;
  li.image = oracle::random_tensor<float>(Shape{3, 16, 16}, rng, 0.0, 1.0);
  BoundingBox b;
  b.class_id = 0;
  b.cx = 0.5f;
  b.cy = 0.5f;
  b.w = 0.4f;
  b.h = 0.35f;
  li.boxes.push_back(b);

  camo::TrainHyper hyper;
  hyper.epochs = 50;
  hyper.lr = 0.0005f;
  hyper.momentum = 0.5f;  // heavy momentum oscillates on a single image
  hyper.batch_size = 1;
  hyper.seed = 9;
  auto result = camo::train_detector({li}, cfg, hyper);
  REQUIRE(result.epoch_loss.size() == 50);
  int rises = 0;
  for (std::size_t i = 1; i < result.epoch_loss.size(); ++i)
    if (result.epoch_loss[i] > result.epoch_loss[i - 1]) ++rises;
  CHECK(rises <= 5);
  CHECK(result.epoch_loss.back() < 0.5 * result.epoch_loss.front());
}

TEST_CASE("train_detector edge cases") {
  auto cfg = tiny_config();
  Rng rng(13);
  camo::LabeledImage li;
  li.image = oracle::random_tensor<float>(Shape{3, 16, 16}, rng, 0.0, 1.0);
  BoundingBox b;
  b.class_id = 1;
  b.cx = 0.4f;
  b.cy = 0.6f;
  b.w = 0.3f;
  b.h = 0.3f;
  li.boxes.push_back(b);

  SECTION("empty dataset is a usage error") {
    CHECK_THROWS_AS(camo::train_detector({}, cfg, {}), camo::UsageError);
  }
  SECTION("labels outside the configured classes are rejected") {
    camo::LabeledImage bad = li;
    bad.boxes[0].class_id = 7;
    CHECK_THROWS_AS(camo::train_detector({bad}, cfg, {}), camo::UsageError);
  }
  SECTION("lr = 0 leaves weights at their initialization") {
    camo::TrainHyper hyper;
    hyper.epochs = 3;
    hyper.lr = 0.0f;
    hyper.seed = 21;
    auto result = camo::train_detector({li}, cfg, hyper);
    auto init = camo::init_weights<float>(cfg, 21);
    REQUIRE(result.weights.tensors.size() == init.tensors.size());
    for (std::size_t i = 0; i < init.tensors.size(); ++i)
      CHECK(result.weights.tensors[i].second.values() ==
            init.tensors[i].second.values());
  }
  SECTION("same seed twice gives identical loss history") {
    camo::TrainHyper hyper;
    hyper.epochs = 4;
    hyper.seed = 33;
    auto r1 = camo::train_detector({li}, cfg, hyper);
    auto r2 = camo::train_detector({li}, cfg, hyper);
    CHECK(r1.epoch_loss == r2.epoch_loss);
    for (std::size_t i = 0; i < r1.weights.tensors.size(); ++i)
      CHECK(r1.weights.tensors[i].second.values() ==
            r2.weights.tensors[i].second.values());
  }
}

TEST_CASE("weights round-trip bit-exactly through the CAMW container") {
  auto cfg = tiny_config();
  auto w = camo::init_weights<float>(cfg, 99);
  const std::string path = "test_weights_roundtrip.camw";
  camo::save_weights(path, w);
  auto r = camo::load_weights(path);
  CHECK(r.config.fingerprint() == w.config.fingerprint());
  REQUIRE(r.tensors.size() == w.tensors.size());
  for (std::size_t i = 0; i < w.tensors.size(); ++i) {
    CHECK(r.tensors[i].first == w.tensors[i].first);
    CHECK(r.tensors[i].second.shape() == w.tensors[i].second.shape());
    CHECK(r.tensors[i].second.values() == w.tensors[i].second.values());
  }
  std::remove(path.c_str());
  CHECK_THROWS_AS(camo::load_weights("does_not_exist.camw"), camo::IoError);
}
