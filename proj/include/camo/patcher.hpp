#pragma once

#include <cmath>
#include <cstdint>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "camo/geometry.hpp"
#include "camo/ops.hpp"
#include "camo/rng.hpp"

namespace camo {

// Optimizable patch image. Pixels live in [0,1]; the trainer clamps after
// every step and projects channels to their mean when grayscale-constrained.
template <typename T>
struct PatchT {
  Tensor<T> pixels;  // [3,P,P]
  std::string provenance;

  int side() const { return pixels.dim(1); }
};

using Patch = PatchT<float>;

// Placement-time jitter configuration (expectation-over-transformation).
struct ApplyConfig {
  double size_fraction = 0.3;  // patch area as a fraction of the box area
  double alpha = 1.0;          // 1 = opaque, 0 = invisible
  double rotation_range = 20.0 * 3.14159265358979323846 / 180.0;  // +/- radians
  double noise_amp = 0.1;      // uniform per-pixel amplitude
  double brightness_range = 0.08;  // additive, +/-
  double contrast_range = 0.08;    // multiplicative, 1 +/- range
  std::uint64_t seed = 1;

  void validate() const {
    if (!(size_fraction > 0.0 && size_fraction <= 1.0))
      throw ParamError("apply config: size_fraction must be in (0,1], got " +
                       std::to_string(size_fraction));
    if (alpha < 0.0 || alpha > 1.0)
      throw ParamError("apply config: alpha must be in [0,1], got " +
                       std::to_string(alpha));
    if (noise_amp < 0.0 || noise_amp > 0.5)
      throw ParamError("apply config: noise_amp must be in [0,0.5], got " +
                       std::to_string(noise_amp));
  }
};

// One placement from the jitter log. Together with the patch, alpha and
// noise_amp this fully determines the composited pixels, so a run can be
// replayed bit-identically.
struct Placement {
  int box_index = 0;
  int side = 0;  // pixels
  int y0 = 0;    // top-left corner in image pixels
  int x0 = 0;
  double rotation = 0.0;
  double brightness = 0.0;
  double contrast = 1.0;
  std::uint64_t noise_seed = 0;
};

inline std::string placement_line(const Placement& p) {
  std::ostringstream os;
  os.precision(17);
  os << "box=" << p.box_index << " side=" << p.side << " y0=" << p.y0
     << " x0=" << p.x0 << " rot=" << p.rotation << " bright=" << p.brightness
     << " contrast=" << p.contrast << " noise_seed=" << p.noise_seed;
  return os.str();
}

template <typename T>
struct ApplyResultT {
  Tensor<T> image;
  std::vector<Placement> placements;
  std::vector<std::string> warnings;  // skipped degenerate boxes
};

using ApplyResult = ApplyResultT<float>;

// Side length in pixels of the square patch covering size_fraction of the
// box area, never below 2 px.
inline int patch_side(const BoundingBox& box, double size_fraction,
                      int image_size) {
  const double w_px = static_cast<double>(box.w) * image_size;
  const double h_px = static_cast<double>(box.h) * image_size;
  if (!(w_px > 0.0 && h_px > 0.0))
    throw ParamError("patch_side: box has zero area");
  const int side =
      static_cast<int>(std::lround(std::sqrt(size_fraction * w_px * h_px)));
  return std::max(2, side);
}

namespace detail {

template <typename T>
Tensor<T> noise_tile(int side, double amp, std::uint64_t seed) {
  std::vector<T> n(static_cast<std::size_t>(3) * side * side);
  Rng rng(seed);
  for (auto& v : n) v = static_cast<T>(rng.uniform(-amp, amp));
  return Tensor<T>(Shape{3, side, side}, std::move(n));
}

}  // namespace detail

// Composite one placement onto the image; differentiable w.r.t. the patch
// pixels and the image. The jittered tile is resampled with rotation,
// noised, brightness/contrast adjusted, clamped to [0,1] and alpha-blended
// inside its coverage mask.
template <typename T>
Tensor<T> composite_placement(const Tensor<T>& image,
                              const Tensor<T>& patch_pixels,
                              const Placement& pl, double alpha,
                              double noise_amp) {
  const int H = image.dim(1), W = image.dim(2);
  const int P = patch_pixels.dim(1);
  auto sampled = affine_sample(patch_pixels, pl.rotation,
                               static_cast<double>(pl.side) / P, pl.side,
                               pl.side);
  Tensor<T> tile = sampled.image;
  if (noise_amp > 0.0)
    tile = add(tile, detail::noise_tile<T>(pl.side, noise_amp, pl.noise_seed));
  tile = add_scalar(mul_scalar(tile, static_cast<T>(pl.contrast)),
                    static_cast<T>(pl.brightness));
  tile = clamp(tile, T(0), T(1));
  Tensor<T> patch_full = embed(tile, H, W, pl.y0, pl.x0);
  Tensor<T> mask_full = embed(sampled.mask, H, W, pl.y0, pl.x0);
  return alpha_composite(image, patch_full, mask_full, alpha);
}

// Draws the jitter for one box. The stream is derived from (seed, box index)
// so placements are independent of evaluation order.
inline Placement draw_placement(const BoundingBox& box, int box_index,
                                const ApplyConfig& cfg, int image_size) {
  Placement pl;
  pl.box_index = box_index;
  pl.side = patch_side(box, cfg.size_fraction, image_size);
  pl.y0 = static_cast<int>(
      std::lround(static_cast<double>(box.cy) * image_size - pl.side * 0.5));
  pl.x0 = static_cast<int>(
      std::lround(static_cast<double>(box.cx) * image_size - pl.side * 0.5));
  Rng rng(seed_combine(cfg.seed, 0xB0C5ull + static_cast<std::uint64_t>(box_index)));
  pl.rotation = rng.uniform(-cfg.rotation_range, cfg.rotation_range);
  pl.brightness = rng.uniform(-cfg.brightness_range, cfg.brightness_range);
  pl.contrast = rng.uniform(1.0 - cfg.contrast_range, 1.0 + cfg.contrast_range);
  pl.noise_seed = rng.next_u64();
  return pl;
}

// Applies the patch to every box whose class is in target_classes, in box
// order. Pixels outside all placements stay bit-identical to the input.
template <typename T>
ApplyResultT<T> apply_patches(const Tensor<T>& image,
                              const std::vector<BoundingBox>& boxes,
                              const PatchT<T>& patch, const ApplyConfig& cfg,
                              const std::set<int>& target_classes) {
  cfg.validate();
  if (image.rank() != 3 || image.dim(0) != 3)
    throw DimError("apply_patches: image must be [3,H,W], got " +
                   shape_str(image.shape()));
  if (patch.pixels.rank() != 3 || patch.pixels.dim(0) != 3 ||
      patch.pixels.dim(1) != patch.pixels.dim(2))
    throw DimError("apply_patches: patch must be square [3,P,P]");

  ApplyResultT<T> result;
  result.image = image;
  const int size = image.dim(1);
  for (std::size_t i = 0; i < boxes.size(); ++i) {
    const auto& box = boxes[i];
    if (!target_classes.count(box.class_id)) continue;
    if (!(box.w > 0.0f && box.h > 0.0f)) {
      result.warnings.push_back("box " + std::to_string(i) +
                                ": degenerate (zero area), skipped");
      continue;
    }
    Placement pl = draw_placement(box, static_cast<int>(i), cfg, size);
    result.image =
        composite_placement(result.image, patch.pixels, pl, cfg.alpha,
                            cfg.noise_amp);
    result.placements.push_back(pl);
  }
  return result;
}

// Replay a jitter log against the same patch/alpha/noise settings.
template <typename T>
Tensor<T> apply_placements(const Tensor<T>& image, const PatchT<T>& patch,
                           const std::vector<Placement>& placements,
                           double alpha, double noise_amp) {
  Tensor<T> out = image;
  for (const auto& pl : placements)
    out = composite_placement(out, patch.pixels, pl, alpha, noise_amp);
  return out;
}

}  // namespace camo
