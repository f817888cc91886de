#pragma once

#include <array>
#include <cmath>
#include <cstdint>
#include <set>
#include <string>
#include <vector>

#include "camo/detector.hpp"
#include "camo/image_io.hpp"
#include "camo/patcher.hpp"

namespace camo {

enum class LossKind { Obj, Cls, ObjXCls };
enum class PatchInit { Random, GrayFlat, Legacy };
enum class ObjReduce { Max, Mean };

inline const char* to_string(LossKind k) {
  switch (k) {
    case LossKind::Obj: return "obj";
    case LossKind::Cls: return "cls";
    case LossKind::ObjXCls: return "obj_x_cls";
  }
  return "?";
}

inline LossKind parse_loss_kind(const std::string& s) {
  if (s == "obj") return LossKind::Obj;
  if (s == "cls" || s == "class") return LossKind::Cls;
  if (s == "obj_x_cls" || s == "obj*cls" || s == "obj_class")
    return LossKind::ObjXCls;
  throw ParseError("unknown loss kind '" + s + "'");
}

// One experiment of the patch grid: the loss mode, size/alpha axes, color
// constraint, init and schedule.
struct PatchConfig {
  std::string name = "patch";
  LossKind loss_kind = LossKind::Obj;
  double size_fraction = 0.2;
  double alpha = 0.4;
  bool grayscale = false;
  PatchInit init = PatchInit::Random;
  std::string legacy_path;  // required when init == Legacy
  double noise_amp = 0.1;
  int epochs = 40;  // the paper-default minimum
  double lr = 0.05;
  double tv_weight = 0.05;
  double nps_weight = 0.0;
  std::vector<std::array<float, 3>> palette;  // for the printability score
  ObjReduce obj_reduce = ObjReduce::Max;
  double cls_gate = 0.3;
  int patch_pixels = 32;
  int batch_size = 8;
  std::set<int> target_classes{0, 1, 2, 3};
  std::uint64_t seed = 1;

  // smoke = reduced-budget replay mode; it may go below the 40-epoch floor
  void validate(bool smoke = false) const {
    if (!smoke && epochs < 40)
      throw ParamError("patch config '" + name +
                       "': epochs must be >= 40 (got " +
                       std::to_string(epochs) + "); use smoke mode to shrink");
    if (epochs < 1) throw ParamError("patch config: epochs must be positive");
    if (init == PatchInit::Legacy && legacy_path.empty())
      throw ParamError("patch config '" + name + "': legacy init needs a file");
    ApplyConfig a;
    a.size_fraction = size_fraction;
    a.alpha = alpha;
    a.noise_amp = noise_amp;
    a.validate();
    if (patch_pixels < 2)
      throw ParamError("patch config: patch_pixels must be >= 2");
  }

  ApplyConfig apply_config(std::uint64_t stream) const {
    ApplyConfig a;
    a.size_fraction = size_fraction;
    a.alpha = alpha;
    a.noise_amp = noise_amp;
    a.seed = seed_combine(seed, stream);
    return a;
  }
};

// ---------------------------------------------------------------------------
// patch init
// ---------------------------------------------------------------------------

namespace detail {

// Plain per-axis bilinear resize (no rotation), values only.
inline Tensor<float> resize_rgb(const Tensor<float>& src, int out_h, int out_w) {
  const int C = src.dim(0), h = src.dim(1), w = src.dim(2);
  const double sy_scale = static_cast<double>(out_h) / h;
  const double sx_scale = static_cast<double>(out_w) / w;
  std::vector<float> out(static_cast<std::size_t>(C) * out_h * out_w, 0.0f);
  const auto& sv = src.values();
  for (int c = 0; c < C; ++c)
    for (int y = 0; y < out_h; ++y)
      for (int x = 0; x < out_w; ++x) {
        const double sy =
            std::clamp((y - (out_h - 1) * 0.5) / sy_scale + (h - 1) * 0.5, 0.0,
                       static_cast<double>(h - 1));
        const double sx =
            std::clamp((x - (out_w - 1) * 0.5) / sx_scale + (w - 1) * 0.5, 0.0,
                       static_cast<double>(w - 1));
        const int y0 = static_cast<int>(sy), x0 = static_cast<int>(sx);
        const int y1 = std::min(y0 + 1, h - 1), x1 = std::min(x0 + 1, w - 1);
        const double fy = sy - y0, fx = sx - x0;
        const std::size_t base = static_cast<std::size_t>(c) * h * w;
        out[(static_cast<std::size_t>(c) * out_h + y) * out_w + x] =
            static_cast<float>((1 - fy) * (1 - fx) * sv[base + y0 * w + x0] +
                               (1 - fy) * fx * sv[base + y0 * w + x1] +
                               fy * (1 - fx) * sv[base + y1 * w + x0] +
                               fy * fx * sv[base + y1 * w + x1]);
      }
  return Tensor<float>(Shape{C, out_h, out_w}, std::move(out));
}

inline void project_grayscale(std::vector<float>& pixels, int P) {
  const std::size_t plane = static_cast<std::size_t>(P) * P;
  for (std::size_t i = 0; i < plane; ++i) {
    const float m =
        (pixels[i] + pixels[plane + i] + pixels[2 * plane + i]) / 3.0f;
    pixels[i] = m;
    pixels[plane + i] = m;
    pixels[2 * plane + i] = m;
  }
}

}  // namespace detail

inline Patch init_patch(const PatchConfig& cfg, int P) {
  Patch p;
  p.provenance = cfg.name;
  switch (cfg.init) {
    case PatchInit::GrayFlat:
      p.pixels = Tensor<float>(Shape{3, P, P}, 0.5f);
      break;
    case PatchInit::Random: {
      Rng rng(seed_combine(cfg.seed, 0x9A7C4));
      std::vector<float> data(static_cast<std::size_t>(3) * P * P);
      for (auto& v : data) v = static_cast<float>(rng.uniform());
      p.pixels = Tensor<float>(Shape{3, P, P}, std::move(data));
      break;
    }
    case PatchInit::Legacy: {
      Tensor<float> img = read_png(cfg.legacy_path);  // throws IoError
      p.pixels = detail::resize_rgb(img, P, P);
      break;
    }
  }
  if (cfg.grayscale) {
    auto data = p.pixels.values();
    detail::project_grayscale(data, P);
    p.pixels = Tensor<float>(Shape{3, P, P}, std::move(data));
  }
  return p;
}

// ---------------------------------------------------------------------------
// adversarial losses
// ---------------------------------------------------------------------------

namespace detail {

// Per-anchor ground-truth class: the class of the nearest truth center
// (among target classes), first index winning ties. Empty when no truth
// qualifies.
inline std::vector<int> anchor_class_map(const std::vector<BoundingBox>& truths,
                                         const std::set<int>& target_classes,
                                         const DetectorConfig& config) {
  const int S = config.grid_size, B = config.num_anchors;
  std::vector<const BoundingBox*> targets;
  for (const auto& t : truths)
    if (target_classes.count(t.class_id)) targets.push_back(&t);
  if (targets.empty()) return {};
  std::vector<int> map(static_cast<std::size_t>(S) * S * B, 0);
  for (int y = 0; y < S; ++y)
    for (int x = 0; x < S; ++x) {
      const double ax = (x + 0.5) / S, ay = (y + 0.5) / S;
      double best = 1e18;
      int cls = 0;
      for (const auto* t : targets) {
        const double d = (t->cx - ax) * (t->cx - ax) + (t->cy - ay) * (t->cy - ay);
        if (d < best) {
          best = d;
          cls = t->class_id;
        }
      }
      for (int b = 0; b < B; ++b)
        map[(static_cast<std::size_t>(y) * S + x) * B + b] = cls;
    }
  return map;
}

// In-graph softmax probability of the mapped class per anchor: [S,S,B].
template <typename T>
Tensor<T> gt_class_prob(const Tensor<T>& raw, const std::vector<int>& cls_map,
                        const DetectorConfig& config) {
  const int S = config.grid_size, B = config.num_anchors,
            K = config.num_classes;
  const Shape grid{S, S, B};
  std::vector<Tensor<T>> logits;
  for (int k = 0; k < K; ++k) logits.push_back(select_last(raw, 5 + k));
  Tensor<T> mx = logits[0];
  for (int k = 1; k < K; ++k) mx = maximum(mx, logits[k]);
  Tensor<T> denom;
  std::vector<Tensor<T>> es;
  for (int k = 0; k < K; ++k) {
    es.push_back(exp(sub(logits[k], mx)));
    denom = k == 0 ? es[k] : add(denom, es[k]);
  }
  Tensor<T> numer;
  for (int k = 0; k < K; ++k) {
    std::vector<T> mask(cls_map.size(), T(0));
    for (std::size_t i = 0; i < cls_map.size(); ++i)
      if (cls_map[i] == k) mask[i] = T(1);
    Tensor<T> term = mul(Tensor<T>(grid, std::move(mask)), es[k]);
    numer = k == 0 ? term : add(numer, term);
  }
  return div(numer, denom);
}

}  // namespace detail

// The three patch objectives. obj suppresses the strongest detection, cls
// pushes down the probability of the true class at confident anchors,
// obj_x_cls attacks their product. All are evaluated on the raw grid of a
// patched image and stay differentiable w.r.t. it.
template <typename T>
Tensor<T> adversarial_loss(const GridPredictionT<T>& pred, LossKind kind,
                           const std::vector<BoundingBox>& truths,
                           const std::set<int>& target_classes,
                           const DetectorConfig& config,
                           double cls_gate = 0.3,
                           ObjReduce obj_reduce = ObjReduce::Max) {
  const Tensor<T>& raw = pred.raw;
  Tensor<T> obj_prob = sigmoid(select_last(raw, 4));

  if (kind == LossKind::Obj)
    return obj_reduce == ObjReduce::Max ? max_all(obj_prob) : mean(obj_prob);

  const auto cls_map =
      detail::anchor_class_map(truths, target_classes, config);
  if (cls_map.empty()) return Tensor<T>::scalar(T(0));
  Tensor<T> p_gt = detail::gt_class_prob(raw, cls_map, config);

  if (kind == LossKind::Cls) {
    // gate on the forward objectness values; the gate itself is constant
    const auto& ov = obj_prob.values();
    std::vector<T> gate(ov.size(), T(0));
    int count = 0;
    for (std::size_t i = 0; i < ov.size(); ++i)
      if (static_cast<double>(ov[i]) > cls_gate) {
        gate[i] = T(1);
        ++count;
      }
    if (count == 0) return Tensor<T>::scalar(T(0));
    Tensor<T> gated = mul(Tensor<T>(obj_prob.shape(), std::move(gate)), p_gt);
    return mul_scalar(sum(gated), T(1) / static_cast<T>(count));
  }

  // ObjXCls
  return max_all(mul(obj_prob, p_gt));
}

// Smoothness penalty: mean over adjacent pixel pairs (horizontal and
// vertical, each channel) of sqrt(diff^2 + 1e-8).
template <typename T>
Tensor<T> total_variation(const Tensor<T>& patch) {
  if (patch.rank() != 3)
    throw DimError("total_variation: patch must be [C,P,P]");
  const int C = patch.dim(0), H = patch.dim(1), W = patch.dim(2);
  if (H < 2 || W < 2)
    throw ParamError("total_variation: patch side must be >= 2");
  const T eps = static_cast<T>(1e-8);
  const auto& v = patch.values();
  const std::size_t pairs =
      static_cast<std::size_t>(C) * (H * (W - 1) + (H - 1) * W);
  // Kahan accumulation: finite-difference checks need the forward value
  // to be stable to ~1 ulp
  double acc = 0.0, comp = 0.0;
  auto accumulate = [&](double term) {
    const double y = term - comp;
    const double t = acc + y;
    comp = (t - acc) - y;
    acc = t;
  };
  for (int c = 0; c < C; ++c) {
    const std::size_t base = static_cast<std::size_t>(c) * H * W;
    for (int y = 0; y < H; ++y)
      for (int x = 0; x + 1 < W; ++x) {
        const double d = v[base + y * W + x] - v[base + y * W + x + 1];
        accumulate(std::sqrt(d * d + static_cast<double>(eps)));
      }
    for (int y = 0; y + 1 < H; ++y)
      for (int x = 0; x < W; ++x) {
        const double d = v[base + y * W + x] - v[base + (y + 1) * W + x];
        accumulate(std::sqrt(d * d + static_cast<double>(eps)));
      }
  }
  auto pn = patch.node();
  return Tensor<T>::from_op(
      Shape{1}, std::vector<T>{static_cast<T>(acc / pairs)}, {patch},
      [pn, C, H, W, eps, pairs](typename Tensor<T>::Node& self) {
        if (!pn->requires_grad) return;
        auto& g = pn->ensure_grad();
        const auto& v = pn->value;
        const T u = self.grad[0] / static_cast<T>(pairs);
        for (int c = 0; c < C; ++c) {
          const std::size_t base = static_cast<std::size_t>(c) * H * W;
          for (int y = 0; y < H; ++y)
            for (int x = 0; x + 1 < W; ++x) {
              const T d = v[base + y * W + x] - v[base + y * W + x + 1];
              const T s = d / std::sqrt(d * d + eps);
              g[base + y * W + x] += u * s;
              g[base + y * W + x + 1] -= u * s;
            }
          for (int y = 0; y + 1 < H; ++y)
            for (int x = 0; x < W; ++x) {
              const T d = v[base + y * W + x] - v[base + (y + 1) * W + x];
              const T s = d / std::sqrt(d * d + eps);
              g[base + y * W + x] += u * s;
              g[base + (y + 1) * W + x] -= u * s;
            }
        }
      });
}

// Non-printability score: mean over pixels of the squared RGB distance to
// the nearest palette color.
template <typename T>
Tensor<T> nps(const Tensor<T>& patch,
              const std::vector<std::array<float, 3>>& palette) {
  if (palette.empty()) throw ParamError("nps: palette must not be empty");
  if (patch.rank() != 3 || patch.dim(0) != 3)
    throw DimError("nps: patch must be [3,P,P]");
  const int H = patch.dim(1), W = patch.dim(2);
  const std::size_t plane = static_cast<std::size_t>(H) * W;
  const auto& v = patch.values();
  std::vector<int> nearest(plane, 0);
  double acc = 0.0;
  for (std::size_t i = 0; i < plane; ++i) {
    double best = 1e18;
    for (std::size_t p = 0; p < palette.size(); ++p) {
      double d = 0.0;
      for (int c = 0; c < 3; ++c) {
        const double diff = v[c * plane + i] - palette[p][c];
        d += diff * diff;
      }
      if (d < best) {
        best = d;
        nearest[i] = static_cast<int>(p);
      }
    }
    acc += best;
  }
  auto pn = patch.node();
  return Tensor<T>::from_op(
      Shape{1}, std::vector<T>{static_cast<T>(acc / plane)}, {patch},
      [pn, palette, nearest, plane](typename Tensor<T>::Node& self) {
        if (!pn->requires_grad) return;
        auto& g = pn->ensure_grad();
        const auto& v = pn->value;
        const T u = self.grad[0] / static_cast<T>(plane);
        for (std::size_t i = 0; i < plane; ++i) {
          const auto& pal = palette[nearest[i]];
          for (int c = 0; c < 3; ++c)
            g[c * plane + i] +=
                u * T(2) * (v[c * plane + i] - static_cast<T>(pal[c]));
        }
      });
}

// ---------------------------------------------------------------------------
// patch training
// ---------------------------------------------------------------------------

struct PatchTrainResult {
  Patch patch;
  std::vector<double> epoch_adv_loss;
  std::vector<double> epoch_total_loss;
  int best_epoch = -1;
  std::vector<std::string> warnings;
};

// Plain gradient descent on the patch pixels against frozen detector
// weights; step size halves every 20 epochs. After every step the pixels
// are clamped to [0,1] and, for grayscale configs, projected to their
// channel mean.
inline PatchTrainResult train_patch(const DetectorWeights& weights,
                                    const std::vector<LabeledImage>& dataset,
                                    const PatchConfig& cfg, bool smoke = false) {
  cfg.validate(smoke);
  if (weights.tensors.empty())
    throw UsageError("train_patch: detector weights are missing or untrained");
  if (dataset.empty()) throw UsageError("train_patch: empty dataset");
  for (const auto& [name, t] : weights.tensors)
    if (t.requires_grad())
      throw UsageError("train_patch: detector weights must be frozen");

  PatchTrainResult result;
  result.patch = init_patch(cfg, cfg.patch_pixels);
  if (cfg.alpha == 0.0) {
    // invisible patch: no gradient reaches it, so there is nothing to train
    result.warnings.push_back(
        "alpha = 0: the patch is invisible and receives no gradient; "
        "returning the initial patch unchanged");
    return result;
  }

  Tensor<float> pixels = result.patch.pixels;
  pixels.set_requires_grad(true);
  const int P = cfg.patch_pixels;

  double best_loss = 1e18;
  std::vector<float> best_pixels = pixels.values();

  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    const double lr = cfg.lr * std::pow(0.5, epoch / 20);
    double adv_sum = 0.0, total_sum = 0.0;
    int batches = 0;
    for (std::size_t start = 0; start < dataset.size();
         start += cfg.batch_size) {
      const std::size_t end =
          std::min(dataset.size(), start + cfg.batch_size);
      std::vector<Tensor<float>> patched;
      std::vector<const LabeledImage*> items;
      for (std::size_t i = start; i < end; ++i) {
        const auto& li = dataset[i];
        ApplyConfig acfg = cfg.apply_config(
            static_cast<std::uint64_t>(epoch) * 1000003ull + i);
        Patch cur{pixels, cfg.name};
        auto applied = apply_patches(li.image, li.boxes, cur, acfg,
                                     cfg.target_classes);
        patched.push_back(applied.image);
        items.push_back(&li);
      }
      Tensor<float> preds = forward_batch(weights, stack0<float>(patched));
      Tensor<float> adv;
      for (std::size_t i = 0; i < items.size(); ++i) {
        GridPrediction p{slice0(preds, static_cast<int>(i))};
        Tensor<float> ai = adversarial_loss(
            p, cfg.loss_kind, items[i]->boxes, cfg.target_classes,
            weights.config, cfg.cls_gate, cfg.obj_reduce);
        adv = i == 0 ? ai : add(adv, ai);
      }
      adv = mul_scalar(adv, 1.0f / static_cast<float>(items.size()));
      Tensor<float> total = adv;
      if (cfg.tv_weight > 0.0)
        total = add(total, mul_scalar(total_variation(pixels),
                                      static_cast<float>(cfg.tv_weight)));
      if (cfg.nps_weight > 0.0 && !cfg.palette.empty())
        total = add(total, mul_scalar(nps(pixels, cfg.palette),
                                      static_cast<float>(cfg.nps_weight)));

      pixels.zero_grad();
      total.backward();
      adv_sum += adv.item();
      total_sum += total.item();
      ++batches;

      auto& data = pixels.values_mut();
      const auto& g = pixels.grad();
      for (std::size_t j = 0; j < data.size(); ++j) {
        data[j] -= static_cast<float>(lr) * g[j];
        data[j] = std::min(1.0f, std::max(0.0f, data[j]));
      }
      if (cfg.grayscale) detail::project_grayscale(data, P);
    }
    const double adv_mean = adv_sum / std::max(1, batches);
    result.epoch_adv_loss.push_back(adv_mean);
    result.epoch_total_loss.push_back(total_sum / std::max(1, batches));
    if (adv_mean < best_loss) {
      best_loss = adv_mean;
      best_pixels = pixels.values();
      result.best_epoch = epoch;
    }
  }

  result.patch.pixels = Tensor<float>(Shape{3, P, P}, std::move(best_pixels));
  result.patch.provenance = cfg.name;
  return result;
}

}  // namespace camo
