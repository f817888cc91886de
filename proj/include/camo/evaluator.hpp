#pragma once

#include <array>
#include <cmath>
#include <cstdint>
#include <numeric>
#include <string>
#include <vector>

#include "camo/dataset.hpp"
#include "camo/detector.hpp"
#include "camo/parallel.hpp"

namespace camo {

// ---------------------------------------------------------------------------
// matching
// ---------------------------------------------------------------------------

struct MatchResult {
  int tp = 0, fp = 0, fn = 0;
  std::vector<std::pair<int, int>> assignment;  // (pred index, truth index)
};

// Greedy confidence-ordered matching: a prediction claims the best still-free
// truth of its own class with IOU >= thresh. This is the standard detection
// benchmark convention; it never beats the optimal assignment, which the
// tests keep as an oracle.
inline MatchResult match(const std::vector<Detection>& preds,
                         const std::vector<BoundingBox>& truths,
                         double iou_thresh = 0.5) {
  std::vector<std::size_t> order(preds.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) {
                     return preds[a].score > preds[b].score;
                   });
  std::vector<char> truth_used(truths.size(), 0);
  MatchResult r;
  for (std::size_t oi : order) {
    const auto& p = preds[oi];
    int best = -1;
    double best_iou = iou_thresh;
    for (std::size_t t = 0; t < truths.size(); ++t) {
      if (truth_used[t] || truths[t].class_id != p.class_id) continue;
      const double v = iou(p.box, truths[t]);
      if (v >= best_iou && (best < 0 || v > best_iou)) {
        best = static_cast<int>(t);
        best_iou = v;
      }
    }
    if (best >= 0) {
      truth_used[best] = 1;
      r.assignment.emplace_back(static_cast<int>(oi), best);
      ++r.tp;
    } else {
      ++r.fp;
    }
  }
  r.fn = static_cast<int>(truths.size()) - r.tp;
  return r;
}

// per image, per class: {tp, fp, fn}
using ClassCounts = std::vector<std::array<long, 3>>;

inline ClassCounts per_class_counts(const std::vector<Detection>& preds,
                                    const std::vector<BoundingBox>& truths,
                                    int num_classes, double iou_thresh) {
  ClassCounts counts(num_classes, {0, 0, 0});
  MatchResult r = match(preds, truths, iou_thresh);
  std::vector<char> pred_matched(preds.size(), 0), truth_matched(truths.size(), 0);
  for (auto [pi, ti] : r.assignment) {
    pred_matched[pi] = 1;
    truth_matched[ti] = 1;
    if (truths[ti].class_id < num_classes) ++counts[truths[ti].class_id][0];
  }
  for (std::size_t i = 0; i < preds.size(); ++i)
    if (!pred_matched[i] && preds[i].class_id < num_classes)
      ++counts[preds[i].class_id][1];
  for (std::size_t i = 0; i < truths.size(); ++i)
    if (!truth_matched[i] && truths[i].class_id < num_classes)
      ++counts[truths[i].class_id][2];
  return counts;
}

// ---------------------------------------------------------------------------
// F1 / bootstrap
// ---------------------------------------------------------------------------

inline double f1_from_counts(long tp, long fp, long fn) {
  const double p = tp + fp > 0 ? static_cast<double>(tp) / (tp + fp) : 0.0;
  const double r = tp + fn > 0 ? static_cast<double>(tp) / (tp + fn) : 0.0;
  return p + r > 0 ? 2.0 * p * r / (p + r) : 0.0;
}

struct ClassScore {
  std::string name;
  double precision = 0.0, recall = 0.0, f1 = 0.0, sigma = 0.0;
  long tp = 0, fp = 0, fn = 0;
};

struct EvalReport {
  std::vector<ClassScore> per_class;
  double mf1 = 0.0;
  double mf1_sigma = 0.0;
  double iou_thresh = 0.5;
};

struct BootstrapSigmas {
  std::vector<double> per_class;
  double mf1 = 0.0;
};

// 1-sigma errors from resampling images with replacement and recomputing
// each metric on the resampled count records.
inline BootstrapSigmas bootstrap_sigma(
    const std::vector<ClassCounts>& per_image, int num_classes,
    int n_boot = 1000, std::uint64_t seed = 1) {
  if (per_image.empty())
    throw UsageError("bootstrap_sigma: need at least one image");
  Rng rng(seed_combine(seed, 0xB007));
  // replicate values kept for a two-pass variance: the degenerate case must
  // come out exactly zero
  std::vector<std::vector<double>> class_f1(num_classes);
  std::vector<double> mf1s;
  std::vector<std::array<long, 3>> agg(num_classes);
  const int n = static_cast<int>(per_image.size());
  for (int b = 0; b < n_boot; ++b) {
    for (auto& a : agg) a = {0, 0, 0};
    for (int i = 0; i < n; ++i) {
      const auto& counts = per_image[rng.uniform_int(0, n - 1)];
      for (int k = 0; k < num_classes; ++k) {
        agg[k][0] += counts[k][0];
        agg[k][1] += counts[k][1];
        agg[k][2] += counts[k][2];
      }
    }
    double mf1 = 0.0;
    for (int k = 0; k < num_classes; ++k) {
      const double f1 = f1_from_counts(agg[k][0], agg[k][1], agg[k][2]);
      class_f1[k].push_back(f1);
      mf1 += f1;
    }
    mf1s.push_back(mf1 / num_classes);
  }
  auto stddev = [](const std::vector<double>& v) {
    const auto [lo, hi] = std::minmax_element(v.begin(), v.end());
    if (*lo == *hi) return 0.0;  // degenerate resampling is exactly zero
    double mean = 0.0;
    for (double x : v) mean += x;
    mean /= static_cast<double>(v.size());
    double var = 0.0;
    for (double x : v) var += (x - mean) * (x - mean);
    return std::sqrt(var / static_cast<double>(v.size()));
  };
  BootstrapSigmas out;
  for (int k = 0; k < num_classes; ++k)
    out.per_class.push_back(stddev(class_f1[k]));
  out.mf1 = stddev(mf1s);
  return out;
}

// Aggregates per-class precision/recall/F1 over all images; mF1 is the
// unweighted class mean.
inline EvalReport f1_report(
    const std::vector<std::vector<Detection>>& preds_per_image,
    const std::vector<std::vector<BoundingBox>>& truths_per_image,
    const ClassMap& classes, double iou_thresh = 0.5, int n_boot = 1000,
    std::uint64_t seed = 1) {
  if (preds_per_image.size() != truths_per_image.size())
    throw UsageError("f1_report: preds and truths must pair per image");
  const int K = classes.size();
  std::vector<ClassCounts> per_image;
  per_image.reserve(preds_per_image.size());
  for (std::size_t i = 0; i < preds_per_image.size(); ++i)
    per_image.push_back(per_class_counts(preds_per_image[i],
                                         truths_per_image[i], K, iou_thresh));

  EvalReport report;
  report.iou_thresh = iou_thresh;
  double mf1 = 0.0;
  for (int k = 0; k < K; ++k) {
    ClassScore s;
    s.name = classes.names[k];
    for (const auto& counts : per_image) {
      s.tp += counts[k][0];
      s.fp += counts[k][1];
      s.fn += counts[k][2];
    }
    s.precision = s.tp + s.fp > 0 ? static_cast<double>(s.tp) / (s.tp + s.fp) : 0.0;
    s.recall = s.tp + s.fn > 0 ? static_cast<double>(s.tp) / (s.tp + s.fn) : 0.0;
    s.f1 = f1_from_counts(s.tp, s.fp, s.fn);
    mf1 += s.f1;
    report.per_class.push_back(std::move(s));
  }
  report.mf1 = mf1 / K;

  if (n_boot > 0 && !per_image.empty()) {
    auto sig = bootstrap_sigma(per_image, K, n_boot, seed);
    for (int k = 0; k < K; ++k) report.per_class[k].sigma = sig.per_class[k];
    report.mf1_sigma = sig.mf1;
  }
  return report;
}

// ---------------------------------------------------------------------------
// scalar metrics
// ---------------------------------------------------------------------------

inline double pearson(const std::vector<double>& x,
                      const std::vector<double>& y) {
  if (x.size() != y.size() || x.size() < 2)
    throw UsageError("pearson: need two equally sized series of length >= 2");
  const double n = static_cast<double>(x.size());
  double mx = 0, my = 0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    mx += x[i];
    my += y[i];
  }
  mx /= n;
  my /= n;
  double sxy = 0, sxx = 0, syy = 0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    sxy += (x[i] - mx) * (y[i] - my);
    sxx += (x[i] - mx) * (x[i] - mx);
    syy += (y[i] - my) * (y[i] - my);
  }
  if (sxx == 0.0 || syy == 0.0)
    throw ParamError("pearson: undefined correlation (zero variance)");
  return sxy / std::sqrt(sxx * syy);
}

// max of camouflage mF1 and patch-detection F1; lower is better for the
// camouflager because a conspicuous patch betrays its wearer.
inline double detection_score(double mf1_camo, double f1_patch) {
  if (mf1_camo < 0.0 || mf1_camo > 1.0 || f1_patch < 0.0 || f1_patch > 1.0)
    throw ParamError("detection_score: inputs must be in [0,1]");
  return std::max(mf1_camo, f1_patch);
}

inline double mf1_reduction(double baseline_mf1, double camo_mf1) {
  if (!(baseline_mf1 > 0.0))
    throw ParamError("mf1_reduction: baseline must be positive");
  return 100.0 * (baseline_mf1 - camo_mf1) / baseline_mf1;
}

// ---------------------------------------------------------------------------
// detector evaluation and the sweep
// ---------------------------------------------------------------------------

struct EvalConfig {
  double conf_thresh = 0.25;
  double nms_iou = 0.45;
  double iou_thresh = 0.5;
  int n_boot = 1000;
  std::uint64_t seed = 1;
};

inline EvalReport evaluate_detector(const DetectorWeights& weights,
                                    const std::vector<LabeledImage>& data,
                                    const ClassMap& classes,
                                    const EvalConfig& cfg = {}) {
  if (data.empty()) throw UsageError("evaluate_detector: empty dataset");
  std::vector<std::vector<Detection>> preds(data.size());
  parallel_for(static_cast<int>(data.size()), [&](int i) {
    preds[i] = detect(weights, data[i].image, cfg.conf_thresh, cfg.nms_iou);
  });
  std::vector<std::vector<BoundingBox>> truths;
  truths.reserve(data.size());
  for (const auto& li : data) truths.push_back(li.boxes);
  return f1_report(preds, truths, classes, cfg.iou_thresh, cfg.n_boot, cfg.seed);
}

struct SweepItem {
  Patch patch;
  std::string name;
  double size_fraction = 0.3;
  double alpha = 1.0;
  double noise_amp = 0.1;
};

struct SweepRow {
  std::string name;
  double size_fraction = 0.0;
  double alpha = 0.0;
  double mf1_camo = 0.0;
  double f1_patch = 0.0;
  double detection_score = 0.0;
  double mf1_reduction_pct = 0.0;
};

struct SweepReport {
  std::vector<SweepRow> rows;
  double baseline_mf1 = 0.0;
  // Pearson over rows; NaN when undefined (fewer than two distinct values)
  double pearson_reduction_size = 0.0;
  double pearson_reduction_alpha = 0.0;
  double pearson_score_size = 0.0;
  double pearson_score_alpha = 0.0;
};

// For every patch: render it onto the test set at its own size/alpha,
// score vehicle detection against the original labels (mF1_camo) and patch
// detection against the placement labels (F1_patch). Patches evaluate in
// parallel; each one uses a seed derived from (seed, patch index) so the
// report does not depend on scheduling.
inline SweepReport run_sweep(const DetectorWeights& vehicle_weights,
                             const DetectorWeights& patch_weights,
                             const std::vector<SweepItem>& library,
                             const std::vector<LabeledImage>& test_data,
                             const ClassMap& classes,
                             const EvalConfig& cfg = {}) {
  if (library.empty()) throw UsageError("run_sweep: empty patch library");
  if (test_data.empty()) throw UsageError("run_sweep: empty test set");

  SweepReport report;
  report.baseline_mf1 =
      evaluate_detector(vehicle_weights, test_data, classes, cfg).mf1;
  if (!(report.baseline_mf1 > 0.0))
    throw UsageError(
        "run_sweep: vehicle detector has zero baseline mF1 on this test set; "
        "reductions are undefined (train the detector first)");

  ClassMap patch_class;
  patch_class.names = {"patch"};
  std::set<int> all_classes;
  for (int k = 0; k < classes.size(); ++k) all_classes.insert(k);

  report.rows.resize(library.size());
  parallel_for(static_cast<int>(library.size()), [&](int pi) {
    const auto& item = library[pi];
    ApplyConfig acfg;
    acfg.size_fraction = item.size_fraction;
    acfg.alpha = item.alpha;
    acfg.noise_amp = item.noise_amp;

    std::vector<std::vector<Detection>> veh_preds, patch_preds;
    std::vector<std::vector<BoundingBox>> veh_truths, patch_truths;
    for (std::size_t i = 0; i < test_data.size(); ++i) {
      const auto& li = test_data[i];
      acfg.seed = seed_combine(cfg.seed, 0x53EEB + pi * 100129ull + i);
      auto applied =
          apply_patches(li.image, li.boxes, item.patch, acfg, all_classes);
      veh_preds.push_back(detect(vehicle_weights, applied.image,
                                 cfg.conf_thresh, cfg.nms_iou));
      veh_truths.push_back(li.boxes);
      const int size = li.image.dim(1);
      std::vector<BoundingBox> placements;
      for (const auto& pl : applied.placements) {
        BoundingBox b;
        b.class_id = 0;
        b.cx = static_cast<float>((pl.x0 + pl.side * 0.5) / size);
        b.cy = static_cast<float>((pl.y0 + pl.side * 0.5) / size);
        b.w = static_cast<float>(static_cast<double>(pl.side) / size);
        b.h = b.w;
        placements.push_back(b);
      }
      patch_preds.push_back(detect(patch_weights, applied.image,
                                   cfg.conf_thresh, cfg.nms_iou));
      patch_truths.push_back(std::move(placements));
    }

    EvalConfig fast = cfg;
    fast.n_boot = 0;  // sigmas are not part of the sweep rows
    SweepRow row;
    row.name = item.name;
    row.size_fraction = item.size_fraction;
    row.alpha = item.alpha;
    row.mf1_camo =
        f1_report(veh_preds, veh_truths, classes, cfg.iou_thresh, 0).mf1;
    row.f1_patch =
        f1_report(patch_preds, patch_truths, patch_class, cfg.iou_thresh, 0).mf1;
    row.detection_score = detection_score(row.mf1_camo, row.f1_patch);
    row.mf1_reduction_pct = mf1_reduction(report.baseline_mf1, row.mf1_camo);
    report.rows[pi] = std::move(row);
  });

  auto safe_pearson = [](const std::vector<double>& x,
                         const std::vector<double>& y) {
    try {
      return pearson(x, y);
    } catch (const Error&) {
      return std::nan("");
    }
  };
  std::vector<double> sizes, alphas, reductions, scores;
  for (const auto& r : report.rows) {
    sizes.push_back(r.size_fraction);
    alphas.push_back(r.alpha);
    reductions.push_back(r.mf1_reduction_pct);
    scores.push_back(r.detection_score);
  }
  report.pearson_reduction_size = safe_pearson(sizes, reductions);
  report.pearson_reduction_alpha = safe_pearson(alphas, reductions);
  report.pearson_score_size = safe_pearson(sizes, scores);
  report.pearson_score_alpha = safe_pearson(alphas, scores);
  return report;
}

}  // namespace camo
