#include <catch2/catch_amalgamated.hpp>
#include <cmath>
#include <set>

#include "camo/patcher.hpp"
#include "support/oracles.hpp"

using camo::ApplyConfig;
using camo::BoundingBox;
using camo::Patch;
using camo::Rng;
using camo::Shape;
using camo::Tensor;

namespace {

// Standalone centered bilinear resize, written independently of
// affine_sample: out side x side from src P x P.
std::vector<float> resize_oracle(const std::vector<float>& src, int P,
                                 int side) {
  std::vector<float> out(static_cast<std::size_t>(3) * side * side, 0.0f);
  const double scale = static_cast<double>(side) / P;
  for (int c = 0; c < 3; ++c)
    for (int y = 0; y < side; ++y)
      for (int x = 0; x < side; ++x) {
        const double sy = (y - (side - 1) * 0.5) / scale + (P - 1) * 0.5;
        const double sx = (x - (side - 1) * 0.5) / scale + (P - 1) * 0.5;
        if (sy < 0 || sy > P - 1 || sx < 0 || sx > P - 1) continue;
        const int y0 = static_cast<int>(std::floor(sy));
        const int x0 = static_cast<int>(std::floor(sx));
        const double fy = sy - y0, fx = sx - x0;
        auto at = [&](int yy, int xx) -> double {
          if (yy < 0 || yy >= P || xx < 0 || xx >= P) return 0.0;
          return src[(static_cast<std::size_t>(c) * P + yy) * P + xx];
        };
        out[(static_cast<std::size_t>(c) * side + y) * side + x] =
            static_cast<float>((1 - fy) * (1 - fx) * at(y0, x0) +
                               (1 - fy) * fx * at(y0, x0 + 1) +
                               fy * (1 - fx) * at(y0 + 1, x0) +
                               fy * fx * at(y0 + 1, x0 + 1));
      }
  return out;
}

Patch make_patch(int P, Rng& rng) {
  Patch p;
  p.pixels = oracle::random_tensor<float>(Shape{3, P, P}, rng, 0.05, 0.95);
  p.provenance = "test";
  return p;
}

}  // namespace

TEST_CASE("patch_side follows the area-fraction formula") {
  BoundingBox box;
  box.w = 50.0f / 416.0f;
  box.h = 40.0f / 416.0f;
  CHECK(camo::patch_side(box, 0.2, 416) == 20);  // sqrt(0.2*50*40) = 20

  BoundingBox square;
  square.w = 30.0f / 416.0f;
  square.h = 30.0f / 416.0f;
  CHECK(camo::patch_side(square, 1.0, 416) == 30);

  BoundingBox degenerate;
  degenerate.w = 0.0f;
  degenerate.h = 0.1f;
  CHECK_THROWS_AS(camo::patch_side(degenerate, 0.2, 416), camo::ParamError);
}

TEST_CASE("placed-patch area tracks the requested fraction over 1000 boxes") {
  Rng rng(4);
  for (int i = 0; i < 1000; ++i) {
    const double f = rng.uniform(0.1, 0.5);
    BoundingBox box;
    box.w = static_cast<float>(rng.uniform(0.1, 0.3));
    box.h = static_cast<float>(rng.uniform(0.1, 0.3));
    const int side = camo::patch_side(box, f, 416);
    const double ratio = static_cast<double>(side) * side /
                         (static_cast<double>(box.w) * 416 * box.h * 416);
    CHECK(ratio >= 0.9 * f);
    CHECK(ratio <= 1.1 * f);
  }
}

TEST_CASE("alpha zero leaves the image bit-identical") {
  Rng rng(8);
  auto image = oracle::random_tensor<float>(Shape{3, 32, 32}, rng, 0.0, 1.0);
  auto patch = make_patch(8, rng);
  BoundingBox box{1, 0.5f, 0.5f, 0.4f, 0.4f, -1.0f};
  ApplyConfig cfg;
  cfg.alpha = 0.0;
  cfg.seed = 5;
  auto out = camo::apply_patches(image, {box}, patch, cfg, {0, 1, 2, 3});
  CHECK(out.image.values() == image.values());
  CHECK(out.placements.size() == 1);
}

TEST_CASE("empty target class set means no placements") {
  Rng rng(9);
  auto image = oracle::random_tensor<float>(Shape{3, 32, 32}, rng, 0.0, 1.0);
  auto patch = make_patch(8, rng);
  BoundingBox box{1, 0.5f, 0.5f, 0.4f, 0.4f, -1.0f};
  ApplyConfig cfg;
  auto out = camo::apply_patches(image, {box}, patch, cfg, {});
  CHECK(out.image.values() == image.values());
  CHECK(out.placements.empty());
}

TEST_CASE("degenerate boxes are skipped with a warning record") {
  Rng rng(10);
  auto image = oracle::random_tensor<float>(Shape{3, 32, 32}, rng, 0.0, 1.0);
  auto patch = make_patch(8, rng);
  BoundingBox bad{0, 0.5f, 0.5f, 0.0f, 0.3f, -1.0f};
  ApplyConfig cfg;
  auto out = camo::apply_patches(image, {bad}, patch, cfg, {0});
  CHECK(out.image.values() == image.values());
  REQUIRE(out.warnings.size() == 1);
  CHECK(out.warnings[0].find("degenerate") != std::string::npos);
}

TEST_CASE("opaque jitter-free placement equals the resize oracle") {
  Rng rng(12);
  auto image = oracle::random_tensor<float>(Shape{3, 48, 48}, rng, 0.0, 1.0);
  auto patch = make_patch(12, rng);
  BoundingBox box{2, 0.5f, 0.5f, 0.5f, 0.4f, -1.0f};
  ApplyConfig cfg;
  cfg.alpha = 1.0;
  cfg.size_fraction = 0.3;
  cfg.rotation_range = 0.0;
  cfg.noise_amp = 0.0;
  cfg.brightness_range = 0.0;
  cfg.contrast_range = 0.0;
  auto out = camo::apply_patches(image, {box}, patch, cfg, {2});
  REQUIRE(out.placements.size() == 1);
  const auto& pl = out.placements[0];
  CHECK(pl.rotation == 0.0);

  auto resized = resize_oracle(patch.pixels.values(), 12, pl.side);
  const auto& ov = out.image.values();
  const auto& iv = image.values();
  const int W = 48;
  for (int c = 0; c < 3; ++c)
    for (int y = 0; y < 48; ++y)
      for (int x = 0; x < 48; ++x) {
        const std::size_t idx = (static_cast<std::size_t>(c) * 48 + y) * W + x;
        const bool inside = y >= pl.y0 && y < pl.y0 + pl.side && x >= pl.x0 &&
                            x < pl.x0 + pl.side;
        if (inside) {
          const std::size_t ridx =
              (static_cast<std::size_t>(c) * pl.side + (y - pl.y0)) * pl.side +
              (x - pl.x0);
          CHECK(std::abs(ov[idx] - resized[ridx]) < 1e-6f);
        } else {
          CHECK(ov[idx] == iv[idx]);  // untouched pixels bit-identical
        }
      }
}

TEST_CASE("pixels outside placements stay bit-identical under full jitter") {
  Rng rng(13);
  auto image = oracle::random_tensor<float>(Shape{3, 64, 64}, rng, 0.0, 1.0);
  auto patch = make_patch(10, rng);
  std::vector<BoundingBox> boxes{{0, 0.3f, 0.3f, 0.25f, 0.2f, -1.0f},
                                 {1, 0.7f, 0.65f, 0.3f, 0.25f, -1.0f}};
  ApplyConfig cfg;
  cfg.alpha = 0.6;
  cfg.seed = 99;
  auto out = camo::apply_patches(image, boxes, patch, cfg, {0, 1});
  REQUIRE(out.placements.size() == 2);

  auto covered = [&](int y, int x) {
    for (const auto& pl : out.placements)
      if (y >= pl.y0 && y < pl.y0 + pl.side && x >= pl.x0 && x < pl.x0 + pl.side)
        return true;
    return false;
  };
  const auto& ov = out.image.values();
  const auto& iv = image.values();
  for (int c = 0; c < 3; ++c)
    for (int y = 0; y < 64; ++y)
      for (int x = 0; x < 64; ++x)
        if (!covered(y, x)) {
          const std::size_t idx = (static_cast<std::size_t>(c) * 64 + y) * 64 + x;
          CHECK(ov[idx] == iv[idx]);
        }
}

TEST_CASE("patch gradient is zero at alpha 0 and scales linearly in alpha") {
  Rng rng(14);
  auto image = oracle::random_tensor<float>(Shape{3, 40, 40}, rng, 0.0, 1.0);
  BoundingBox box{0, 0.5f, 0.5f, 0.4f, 0.4f, -1.0f};
  ApplyConfig base;
  base.seed = 7;

  auto grad_for = [&](double alpha) {
    Patch p;
    Rng prng(21);
    p.pixels = oracle::random_tensor<float>(Shape{3, 8, 8}, prng, 0.2, 0.8);
    p.pixels.set_requires_grad(true);
    ApplyConfig cfg = base;
    cfg.alpha = alpha;
    auto out = camo::apply_patches(image, {box}, p, cfg, {0});
    camo::sum(out.image).backward();
    return p.pixels.grad();
  };

  auto g0 = grad_for(0.0);
  for (float g : g0) CHECK(g == 0.0f);

  auto g_half = grad_for(0.5);
  auto g_one = grad_for(1.0);
  double norm_half = 0;
  for (std::size_t i = 0; i < g_half.size(); ++i) {
    CHECK(std::abs(g_one[i] - 2.0f * g_half[i]) < 1e-5f);
    norm_half += std::abs(g_half[i]);
  }
  CHECK(norm_half > 0.0);  // gradient actually flows at alpha > 0
}

TEST_CASE("jitter log replays to the identical image") {
  Rng rng(15);
  auto image = oracle::random_tensor<float>(Shape{3, 56, 56}, rng, 0.0, 1.0);
  auto patch = make_patch(9, rng);
  std::vector<BoundingBox> boxes{{0, 0.4f, 0.35f, 0.3f, 0.25f, -1.0f},
                                 {1, 0.7f, 0.7f, 0.28f, 0.3f, -1.0f}};
  ApplyConfig cfg;
  cfg.alpha = 0.8;
  cfg.seed = 1234;
  auto out = camo::apply_patches(image, boxes, patch, cfg, {0, 1});
  auto replay = camo::apply_placements(image, patch, out.placements, cfg.alpha,
                                       cfg.noise_amp);
  CHECK(replay.values() == out.image.values());

  // same seed twice is identical, different seed differs
  auto again = camo::apply_patches(image, boxes, patch, cfg, {0, 1});
  CHECK(again.image.values() == out.image.values());
  ApplyConfig other = cfg;
  other.seed = 4321;
  auto different = camo::apply_patches(image, boxes, patch, other, {0, 1});
  CHECK(different.image.values() != out.image.values());
}

TEST_CASE("apply config validation") {
  ApplyConfig cfg;
  cfg.size_fraction = 0.0;
  CHECK_THROWS_AS(cfg.validate(), camo::ParamError);
  cfg.size_fraction = 0.3;
  cfg.alpha = 1.2;
  CHECK_THROWS_AS(cfg.validate(), camo::ParamError);
  cfg.alpha = 0.5;
  cfg.noise_amp = 0.9;
  CHECK_THROWS_AS(cfg.validate(), camo::ParamError);
}

TEST_CASE("placement line serializes every jitter field") {
  camo::Placement pl;
  pl.box_index = 3;
  pl.side = 14;
  pl.y0 = 7;
  pl.x0 = -2;
  pl.rotation = 0.25;
  pl.brightness = -0.05;
  pl.contrast = 1.02;
  pl.noise_seed = 99;
  const std::string line = camo::placement_line(pl);
  for (const char* key : {"box=3", "side=14", "y0=7", "x0=-2", "rot=0.25",
                          "bright=-0.05", "contrast=1.02", "noise_seed=99"})
    CHECK(line.find(key) != std::string::npos);
}
