#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numeric>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include "camo/labeled_image.hpp"
#include "camo/ops.hpp"
#include "camo/rng.hpp"

namespace camo {

// ---------------------------------------------------------------------------
// configuration
// ---------------------------------------------------------------------------

// Micro single-stage grid detector. The input is downsampled by stride-2 conv
// blocks until the spatial size reaches grid_size, then refined at constant
// resolution and projected to B*(5+K) channels per cell.
struct DetectorConfig {
  int input_size = 104;
  int grid_size = 13;
  int num_anchors = 2;
  std::vector<std::pair<float, float>> anchor_sizes{{0.14f, 0.14f},
                                                    {0.30f, 0.30f}};
  int num_classes = 4;
  std::vector<int> conv_channels{16, 32, 64, 64};

  // loss weighting, documented constants
  float coord_weight = 5.0f;
  float noobj_weight = 0.5f;
  // overall loss multiplier; tuned so the stock lr of 1e-3 trains the
  // normalized loss at a sensible pace
  float loss_scale = 20.0f;

  int stride() const { return input_size / grid_size; }
  int channels_per_anchor() const { return 5 + num_classes; }
  int head_channels() const { return num_anchors * channels_per_anchor(); }

  void validate() const {
    if (grid_size < 1 || input_size < 1)
      throw ParamError("detector config: sizes must be positive");
    if (input_size % grid_size != 0)
      throw ParamError("detector config: input_size " +
                       std::to_string(input_size) +
                       " not divisible by grid_size " +
                       std::to_string(grid_size));
    const int s = stride();
    if ((s & (s - 1)) != 0)
      throw ParamError("detector config: stride must be a power of two, got " +
                       std::to_string(s));
    if (num_anchors != static_cast<int>(anchor_sizes.size()))
      throw ParamError("detector config: num_anchors != anchor_sizes length");
    if (num_classes < 1)
      throw ParamError("detector config: need at least one class");
    if (conv_channels.empty())
      throw ParamError("detector config: conv_channels empty");
    const int downsamples = static_cast<int>(std::round(std::log2(s)));
    if (static_cast<int>(conv_channels.size()) < downsamples)
      throw ParamError("detector config: need at least " +
                       std::to_string(downsamples) + " conv blocks");
  }

  std::string fingerprint() const {
    std::ostringstream os;
    os.precision(9);
    os << "input_size=" << input_size << "\ngrid_size=" << grid_size
       << "\nnum_anchors=" << num_anchors << "\nanchors=";
    for (std::size_t i = 0; i < anchor_sizes.size(); ++i)
      os << (i ? "," : "") << anchor_sizes[i].first << "x"
         << anchor_sizes[i].second;
    os << "\nnum_classes=" << num_classes << "\nconv_channels=";
    for (std::size_t i = 0; i < conv_channels.size(); ++i)
      os << (i ? "," : "") << conv_channels[i];
    os << "\ncoord_weight=" << coord_weight
       << "\nnoobj_weight=" << noobj_weight << "\nloss_scale=" << loss_scale
       << "\n";
    return os.str();
  }
};

template <typename T>
struct DetectorWeightsT {
  DetectorConfig config;
  std::vector<std::pair<std::string, Tensor<T>>> tensors;

  Tensor<T>& find(const std::string& name) {
    for (auto& [n, t] : tensors)
      if (n == name) return t;
    throw UsageError("weights: no tensor named '" + name + "'");
  }
  const Tensor<T>& find(const std::string& name) const {
    return const_cast<DetectorWeightsT*>(this)->find(name);
  }

  void set_requires_grad(bool rg) {
    for (auto& [n, t] : tensors) t.set_requires_grad(rg);
  }
};

using DetectorWeights = DetectorWeightsT<float>;

// Per-image raw prediction, [S,S,B,5+K]: tx,ty,tw,th,objectness,K class logits.
template <typename T>
struct GridPredictionT {
  Tensor<T> raw;
};

using GridPrediction = GridPredictionT<float>;

struct Detection {
  BoundingBox box;
  double objectness = 0.0;
  int class_id = 0;
  double class_conf = 0.0;
  double score = 0.0;  // objectness * class_conf
};

// ---------------------------------------------------------------------------
// weights init / forward
// ---------------------------------------------------------------------------

template <typename T>
DetectorWeightsT<T> init_weights(const DetectorConfig& config,
                                 std::uint64_t seed) {
  config.validate();
  DetectorWeightsT<T> w;
  w.config = config;
  Rng rng(seed_combine(seed, 0xDE7EC70Full));

  auto make = [&](const std::string& name, Shape shape, int fan_in) {
    const double a = std::sqrt(1.0 / fan_in);
    std::vector<T> data(numel(shape));
    for (auto& v : data) v = static_cast<T>(rng.uniform(-a, a));
    w.tensors.emplace_back(name, Tensor<T>(std::move(shape), std::move(data)));
  };

  int in_ch = 3;
  for (std::size_t i = 0; i < config.conv_channels.size(); ++i) {
    const int out_ch = config.conv_channels[i];
    make("conv" + std::to_string(i) + ".weight", Shape{out_ch, in_ch, 3, 3},
         in_ch * 9);
    w.tensors.emplace_back("conv" + std::to_string(i) + ".bias",
                           Tensor<T>(Shape{out_ch}, T(0)));
    in_ch = out_ch;
  }
  make("head.weight", Shape{config.head_channels(), in_ch, 1, 1}, in_ch);
  w.tensors.emplace_back("head.bias",
                         Tensor<T>(Shape{config.head_channels()}, T(0)));
  return w;
}

namespace detail {

// [N, B*(5+K), S, S] -> [N, S, S, B, 5+K]
template <typename T>
struct GridIndex {
  int F, S, B, C;
  std::size_t in(int n, int b, int c, int y, int x) const {
    return ((static_cast<std::size_t>(n) * F + b * C + c) * S + y) * S + x;
  }
  std::size_t out(int n, int b, int c, int y, int x) const {
    return (((static_cast<std::size_t>(n) * S + y) * S + x) * B + b) * C + c;
  }
};

template <typename T>
Tensor<T> to_grid_layout(const Tensor<T>& x, int B, int C) {
  const int N = x.dim(0), F = x.dim(1), S = x.dim(2);
  if (F != B * C) throw DimError("to_grid_layout: channel count mismatch");
  const GridIndex<T> ix{F, S, B, C};
  std::vector<T> out(x.size());
  const auto& xv = x.values();
  for (int n = 0; n < N; ++n)
    for (int b = 0; b < B; ++b)
      for (int c = 0; c < C; ++c)
        for (int y = 0; y < S; ++y)
          for (int xx = 0; xx < S; ++xx)
            out[ix.out(n, b, c, y, xx)] = xv[ix.in(n, b, c, y, xx)];
  auto xn = x.node();
  return Tensor<T>::from_op(
      Shape{N, S, S, B, C}, std::move(out), {x},
      [xn, N, B, C, S, ix](typename Tensor<T>::Node& self) {
        if (!xn->requires_grad) return;
        auto& g = xn->ensure_grad();
        for (int n = 0; n < N; ++n)
          for (int b = 0; b < B; ++b)
            for (int c = 0; c < C; ++c)
              for (int y = 0; y < S; ++y)
                for (int xx = 0; xx < S; ++xx)
                  g[ix.in(n, b, c, y, xx)] += self.grad[ix.out(n, b, c, y, xx)];
      });
}

}  // namespace detail

// Batched forward pass: [N,3,H,W] -> [N,S,S,B,5+K]. Differentiable w.r.t.
// the input images (the patch gradient flows through this) and the weights.
template <typename T>
Tensor<T> forward_batch(const DetectorWeightsT<T>& weights,
                        const Tensor<T>& images) {
  const DetectorConfig& cfg = weights.config;
  if (images.rank() != 4 || images.dim(1) != 3 ||
      images.dim(2) != cfg.input_size || images.dim(3) != cfg.input_size)
    throw DimError("forward: expected [N,3," + std::to_string(cfg.input_size) +
                   "," + std::to_string(cfg.input_size) + "], got " +
                   shape_str(images.shape()));
  Tensor<T> x = images;
  int spatial = cfg.input_size;
  for (std::size_t i = 0; i < cfg.conv_channels.size(); ++i) {
    const int stride = spatial > cfg.grid_size ? 2 : 1;
    x = conv2d(x, weights.find("conv" + std::to_string(i) + ".weight"), stride,
               1, weights.find("conv" + std::to_string(i) + ".bias"));
    x = leaky_relu(x);
    spatial = x.dim(2);
  }
  if (spatial != cfg.grid_size)
    throw DimError("forward: conv stack produced " + std::to_string(spatial) +
                   " cells, expected " + std::to_string(cfg.grid_size));
  x = conv2d(x, weights.find("head.weight"), 1, 0, weights.find("head.bias"));
  return detail::to_grid_layout(x, cfg.num_anchors, cfg.channels_per_anchor());
}

template <typename T>
GridPredictionT<T> forward(const DetectorWeightsT<T>& weights,
                           const Tensor<T>& image) {
  if (image.rank() != 3)
    throw DimError("forward: image must be [3,H,W], got " +
                   shape_str(image.shape()));
  auto batched = forward_batch(weights, stack0<T>({image}));
  return {slice0(batched, 0)};
}

// ---------------------------------------------------------------------------
// decode / encode / nms
// ---------------------------------------------------------------------------

namespace detail {

inline double sigmoid_d(double v) {
  if (v >= 0.0) return 1.0 / (1.0 + std::exp(-v));
  const double e = std::exp(v);
  return e / (1.0 + e);
}

}  // namespace detail

// Raw grid values -> thresholded detections (no suppression).
template <typename T>
std::vector<Detection> decode(const GridPredictionT<T>& pred,
                              double conf_thresh,
                              const DetectorConfig& config) {
  if (conf_thresh < 0.0 || conf_thresh > 1.0)
    throw ParamError("decode: conf_thresh must be in [0,1]");
  const int S = config.grid_size, B = config.num_anchors,
            C = config.channels_per_anchor(), K = config.num_classes;
  if (pred.raw.shape() != Shape{S, S, B, C})
    throw DimError("decode: prediction shape " + shape_str(pred.raw.shape()) +
                   " does not match config");
  const auto& v = pred.raw.values();
  std::vector<Detection> out;
  std::vector<double> probs(K);
  for (int y = 0; y < S; ++y)
    for (int x = 0; x < S; ++x)
      for (int b = 0; b < B; ++b) {
        const std::size_t base =
            ((static_cast<std::size_t>(y) * S + x) * B + b) * C;
        const double obj = detail::sigmoid_d(v[base + 4]);
        // softmax over class logits
        double m = v[base + 5];
        for (int k = 1; k < K; ++k) m = std::max(m, (double)v[base + 5 + k]);
        double denom = 0.0;
        for (int k = 0; k < K; ++k) {
          probs[k] = std::exp((double)v[base + 5 + k] - m);
          denom += probs[k];
        }
        int best = 0;
        for (int k = 1; k < K; ++k)
          if (probs[k] > probs[best]) best = k;
        const double class_conf = probs[best] / denom;
        const double score = obj * class_conf;
        if (score < conf_thresh) continue;
        Detection d;
        d.box.class_id = best;
        d.box.cx = static_cast<float>((x + detail::sigmoid_d(v[base + 0])) / S);
        d.box.cy = static_cast<float>((y + detail::sigmoid_d(v[base + 1])) / S);
        d.box.w = static_cast<float>(std::min(
            1.0, config.anchor_sizes[b].first * std::exp((double)v[base + 2])));
        d.box.h = static_cast<float>(std::min(
            1.0,
            config.anchor_sizes[b].second * std::exp((double)v[base + 3])));
        d.box.confidence = static_cast<float>(score);
        d.objectness = obj;
        d.class_id = best;
        d.class_conf = class_conf;
        d.score = score;
        out.push_back(d);
      }
  return out;
}

// Deterministic cell/anchor assignment: the cell containing the center, the
// best-IOU anchor (falling back to a free one; a truth whose cell has no
// free anchor is dropped).
struct AnchorAssignment {
  int cell_y = 0, cell_x = 0, anchor = 0;
  BoundingBox box;
};

inline std::vector<AnchorAssignment> assign_anchors(
    const std::vector<BoundingBox>& truths, const DetectorConfig& config) {
  const int S = config.grid_size, B = config.num_anchors;
  std::vector<char> taken(static_cast<std::size_t>(S) * S * B, 0);
  std::vector<AnchorAssignment> out;
  for (const auto& t : truths) {
    const int cx = std::clamp(static_cast<int>(t.cx * S), 0, S - 1);
    const int cy = std::clamp(static_cast<int>(t.cy * S), 0, S - 1);
    // anchors ranked by IOU with the truth extent
    std::vector<int> order(B);
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(), [&](int a, int b) {
      return iou_wh(t.w, t.h, config.anchor_sizes[a].first,
                    config.anchor_sizes[a].second) >
             iou_wh(t.w, t.h, config.anchor_sizes[b].first,
                    config.anchor_sizes[b].second);
    });
    for (int b : order) {
      char& slot = taken[(static_cast<std::size_t>(cy) * S + cx) * B + b];
      if (!slot) {
        slot = 1;
        out.push_back({cy, cx, b, t});
        break;
      }
    }
  }
  return out;
}

// Builds the raw grid a perfect detector would emit for the given truths.
// Objectness/class logits are saturated at +/-12.
template <typename T>
GridPredictionT<T> encode(const std::vector<BoundingBox>& truths,
                          const DetectorConfig& config) {
  const int S = config.grid_size, B = config.num_anchors,
            C = config.channels_per_anchor();
  std::vector<T> raw(static_cast<std::size_t>(S) * S * B * C, T(0));
  for (std::size_t i = 0; i < raw.size(); i += C) raw[i + 4] = T(-12);
  for (const auto& a : assign_anchors(truths, config)) {
    const std::size_t base =
        ((static_cast<std::size_t>(a.cell_y) * S + a.cell_x) * B + a.anchor) * C;
    const double fx =
        std::clamp((double)a.box.cx * S - a.cell_x, 1e-6, 1.0 - 1e-6);
    const double fy =
        std::clamp((double)a.box.cy * S - a.cell_y, 1e-6, 1.0 - 1e-6);
    raw[base + 0] = static_cast<T>(std::log(fx / (1.0 - fx)));
    raw[base + 1] = static_cast<T>(std::log(fy / (1.0 - fy)));
    raw[base + 2] = static_cast<T>(
        std::log((double)a.box.w / config.anchor_sizes[a.anchor].first));
    raw[base + 3] = static_cast<T>(
        std::log((double)a.box.h / config.anchor_sizes[a.anchor].second));
    raw[base + 4] = T(12);
    for (int k = 0; k < config.num_classes; ++k)
      raw[base + 5 + k] = a.box.class_id == k ? T(12) : T(-12);
  }
  return {Tensor<T>(Shape{S, S, B, C}, std::move(raw))};
}

// Greedy per-class suppression, descending score, ties broken by the lower
// input index.
inline std::vector<Detection> nms(const std::vector<Detection>& dets,
                                  double iou_thresh) {
  if (!(iou_thresh > 0.0 && iou_thresh <= 1.0))
    throw ParamError("nms: iou_thresh must be in (0,1]");
  std::vector<std::size_t> order(dets.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    return dets[a].score > dets[b].score;
  });
  std::vector<char> removed(dets.size(), 0);
  std::vector<Detection> kept;
  for (std::size_t oi = 0; oi < order.size(); ++oi) {
    const std::size_t i = order[oi];
    if (removed[i]) continue;
    kept.push_back(dets[i]);
    for (std::size_t oj = oi + 1; oj < order.size(); ++oj) {
      const std::size_t j = order[oj];
      if (removed[j] || dets[j].class_id != dets[i].class_id) continue;
      if (iou(dets[i].box, dets[j].box) >= iou_thresh) removed[j] = 1;
    }
  }
  return kept;
}

// Convenience: forward + decode + nms on one image.
template <typename T>
std::vector<Detection> detect(const DetectorWeightsT<T>& weights,
                              const Tensor<T>& image, double conf_thresh = 0.25,
                              double nms_iou = 0.45) {
  auto pred = forward(weights, image);
  return nms(decode(pred, conf_thresh, weights.config), nms_iou);
}

// ---------------------------------------------------------------------------
// supervised loss
// ---------------------------------------------------------------------------

// Squared-error coordinates at assigned anchors, binary cross-entropy
// objectness (negatives down-weighted), softmax cross-entropy classes at
// positives. Positive terms are averaged over assigned anchors and the
// negative term over unassigned ones, so the loss scale is independent of
// grid size and object count.
template <typename T>
struct DetectionLossParts {
  Tensor<T> total;
  double coord = 0.0;  // unweighted forward values, for inspection
  double obj = 0.0;
  double cls = 0.0;
};

template <typename T>
DetectionLossParts<T> detection_loss_parts(const GridPredictionT<T>& pred,
                                           const std::vector<BoundingBox>& truths,
                                           const DetectorConfig& config) {
  const int S = config.grid_size, B = config.num_anchors,
            K = config.num_classes;
  const std::size_t cells = static_cast<std::size_t>(S) * S * B;
  const Shape grid_shape{S, S, B};

  std::vector<T> pos(cells, T(0)), gx(cells, T(0)), gy(cells, T(0)),
      gw(cells, T(0)), gh(cells, T(0));
  std::vector<std::vector<T>> cls_mask(K, std::vector<T>(cells, T(0)));
  int n_pos = 0;
  for (const auto& a : assign_anchors(truths, config)) {
    const std::size_t i =
        (static_cast<std::size_t>(a.cell_y) * S + a.cell_x) * B + a.anchor;
    pos[i] = T(1);
    gx[i] = static_cast<T>(a.box.cx * S - a.cell_x);
    gy[i] = static_cast<T>(a.box.cy * S - a.cell_y);
    gw[i] = static_cast<T>(
        std::log((double)a.box.w / config.anchor_sizes[a.anchor].first));
    gh[i] = static_cast<T>(
        std::log((double)a.box.h / config.anchor_sizes[a.anchor].second));
    cls_mask[a.box.class_id][i] = T(1);
    ++n_pos;
  }
  const T pos_norm = T(1) / static_cast<T>(std::max(1, n_pos));
  const T neg_norm =
      T(1) / static_cast<T>(std::max<std::size_t>(1, cells - n_pos));

  Tensor<T> pos_t(grid_shape, pos);
  Tensor<T> neg_t(grid_shape, std::vector<T>(cells, T(1)));
  neg_t = sub(neg_t, pos_t);

  auto sq = [](const Tensor<T>& t) { return mul(t, t); };

  Tensor<T> sx = sigmoid(select_last(pred.raw, 0));
  Tensor<T> sy = sigmoid(select_last(pred.raw, 1));
  Tensor<T> tw = select_last(pred.raw, 2);
  Tensor<T> th = select_last(pred.raw, 3);
  Tensor<T> obj = select_last(pred.raw, 4);

  Tensor<T> coord = mul_scalar(
      sum(mul(pos_t, add(add(sq(sub(sx, Tensor<T>(grid_shape, gx))),
                             sq(sub(sy, Tensor<T>(grid_shape, gy)))),
                         add(sq(sub(tw, Tensor<T>(grid_shape, gw))),
                             sq(sub(th, Tensor<T>(grid_shape, gh))))))),
      pos_norm);

  Tensor<T> obj_loss =
      add(mul_scalar(sum(mul(pos_t, softplus(neg(obj)))), pos_norm),
          mul_scalar(sum(mul(neg_t, softplus(obj))),
                     static_cast<T>(config.noobj_weight) * neg_norm));

  // softmax cross-entropy via logsumexp over the K class slices
  std::vector<Tensor<T>> logits;
  for (int k = 0; k < K; ++k) logits.push_back(select_last(pred.raw, 5 + k));
  Tensor<T> mx = logits[0];
  for (int k = 1; k < K; ++k) mx = maximum(mx, logits[k]);
  Tensor<T> denom;
  for (int k = 0; k < K; ++k) {
    Tensor<T> e = exp(sub(logits[k], mx));
    denom = k == 0 ? e : add(denom, e);
  }
  Tensor<T> lse = add(mx, log(denom));
  Tensor<T> cls_loss;
  for (int k = 0; k < K; ++k) {
    Tensor<T> term =
        mul(Tensor<T>(grid_shape, cls_mask[k]), sub(lse, logits[k]));
    cls_loss = k == 0 ? term : add(cls_loss, term);
  }
  Tensor<T> cls_sum = mul_scalar(sum(cls_loss), pos_norm);

  DetectionLossParts<T> parts;
  parts.coord = static_cast<double>(coord.item());
  parts.obj = static_cast<double>(obj_loss.item());
  parts.cls = static_cast<double>(cls_sum.item());
  parts.total = mul_scalar(
      add(add(mul_scalar(coord, static_cast<T>(config.coord_weight)), obj_loss),
          cls_sum),
      static_cast<T>(config.loss_scale));
  return parts;
}

template <typename T>
Tensor<T> detection_loss(const GridPredictionT<T>& pred,
                         const std::vector<BoundingBox>& truths,
                         const DetectorConfig& config) {
  return detection_loss_parts(pred, truths, config).total;
}

// ---------------------------------------------------------------------------
// training
// ---------------------------------------------------------------------------

struct TrainHyper {
  int epochs = 80;
  float lr = 0.001f;
  float momentum = 0.9f;
  int batch_size = 8;
  float clip_norm = 50.0f;  // global gradient-norm clip; <= 0 disables
  std::uint64_t seed = 1;
};

struct TrainResult {
  DetectorWeights weights;
  std::vector<double> epoch_loss;
};

// Seeded SGD with momentum. Bit-identical for a fixed seed: shuffling uses
// the library Rng and all kernels reduce in a fixed order.
inline TrainResult train_detector(const std::vector<LabeledImage>& dataset,
                                  const DetectorConfig& config,
                                  const TrainHyper& hyper) {
  config.validate();
  if (dataset.empty()) throw UsageError("train_detector: empty dataset");
  for (const auto& li : dataset)
    for (const auto& b : li.boxes)
      if (b.class_id < 0 || b.class_id >= config.num_classes)
        throw UsageError("train_detector: label class " +
                         std::to_string(b.class_id) +
                         " outside configured classes (image " + li.source_id +
                         ")");

  TrainResult result;
  result.weights = init_weights<float>(config, hyper.seed);
  auto& weights = result.weights;
  weights.set_requires_grad(true);

  std::vector<std::vector<float>> velocity;
  for (auto& [name, t] : weights.tensors)
    velocity.emplace_back(t.size(), 0.0f);

  Rng rng(seed_combine(hyper.seed, 0x7EA111));
  std::vector<int> order(dataset.size());
  std::iota(order.begin(), order.end(), 0);

  for (int epoch = 0; epoch < hyper.epochs; ++epoch) {
    // Fisher-Yates with the library rng
    for (int i = static_cast<int>(order.size()) - 1; i > 0; --i)
      std::swap(order[i], order[rng.uniform_int(0, i)]);

    double epoch_loss = 0.0;
    int batches = 0;
    for (std::size_t start = 0; start < order.size();
         start += hyper.batch_size) {
      const std::size_t end =
          std::min(order.size(), start + hyper.batch_size);
      std::vector<Tensor<float>> imgs;
      for (std::size_t i = start; i < end; ++i)
        imgs.push_back(dataset[order[i]].image);
      Tensor<float> batch = stack0<float>(imgs);
      Tensor<float> preds = forward_batch(weights, batch);
      Tensor<float> loss;
      for (std::size_t i = start; i < end; ++i) {
        GridPrediction p{slice0(preds, static_cast<int>(i - start))};
        Tensor<float> li = detection_loss(p, dataset[order[i]].boxes, config);
        loss = (i == start) ? li : add(loss, li);
      }
      loss = mul_scalar(loss, 1.0f / static_cast<float>(end - start));

      for (auto& [name, t] : weights.tensors) t.zero_grad();
      loss.backward();
      epoch_loss += loss.item();
      ++batches;

      float scale = 1.0f;
      if (hyper.clip_norm > 0.0f) {
        double norm_sq = 0.0;
        for (auto& [name, t] : weights.tensors)
          for (float g : t.grad()) norm_sq += static_cast<double>(g) * g;
        const double norm = std::sqrt(norm_sq);
        if (norm > hyper.clip_norm)
          scale = static_cast<float>(hyper.clip_norm / norm);
      }
      for (std::size_t wi = 0; wi < weights.tensors.size(); ++wi) {
        auto& t = weights.tensors[wi].second;
        const auto& g = t.grad();
        auto& v = velocity[wi];
        auto& data = t.values_mut();
        for (std::size_t j = 0; j < data.size(); ++j) {
          v[j] = hyper.momentum * v[j] - hyper.lr * scale * g[j];
          data[j] += v[j];
        }
      }
    }
    result.epoch_loss.push_back(epoch_loss / std::max(1, batches));
  }
  weights.set_requires_grad(false);
  return result;
}

}  // namespace camo
