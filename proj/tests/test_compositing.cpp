#include <catch2/catch_amalgamated.hpp>
#include <cmath>

#include "camo/grad_check.hpp"
#include "camo/ops.hpp"
#include "camo/rng.hpp"
#include "support/oracles.hpp"

using camo::Rng;
using camo::Shape;
using camo::Tensor;

TEST_CASE("affine_sample identity transform is exact") {
  Rng rng(11);
  auto src = oracle::random_tensor<float>(Shape{3, 7, 5}, rng, 0.0, 1.0);
  auto s = camo::affine_sample(src, 0.0, 1.0, 7, 5);
  CHECK(s.image.values() == src.values());
  for (float m : s.mask.values()) CHECK(m == 1.0f);
}

TEST_CASE("affine_sample rotates an asymmetric 2x2 grid by pi/2") {
  // src = [[1,2],[3,4]]; a counter-clockwise rotation (x right, y up) maps
  // source (0,1) to output (0,0): hand index oracle gives [[2,4],[1,3]].
  Tensor<double> src(Shape{1, 2, 2}, std::vector<double>{1, 2, 3, 4});
  auto s = camo::affine_sample(src, M_PI / 2.0, 1.0, 2, 2);
  const auto& v = s.image.values();
  CHECK(v[0] == Catch::Approx(2.0).margin(1e-12));
  CHECK(v[1] == Catch::Approx(4.0).margin(1e-12));
  CHECK(v[2] == Catch::Approx(1.0).margin(1e-12));
  CHECK(v[3] == Catch::Approx(3.0).margin(1e-12));
}

TEST_CASE("affine_sample coverage mask marks out-of-bounds reads") {
  Tensor<double> src(Shape{1, 2, 2}, 1.0);
  auto s = camo::affine_sample(src, 0.0, 1.0, 4, 4);  // upscale canvas
  int covered = 0;
  for (double m : s.mask.values()) {
    CHECK((m == 0.0 || m == 1.0));
    covered += m == 1.0 ? 1 : 0;
  }
  CHECK(covered > 0);
  CHECK(covered < 16);
  // zero fill outside coverage
  const auto& mv = s.mask.values();
  const auto& iv = s.image.values();
  for (std::size_t i = 0; i < mv.size(); ++i)
    if (mv[i] == 0.0) CHECK(iv[i] == 0.0);
}

TEST_CASE("affine_sample rejects non-positive scale") {
  Tensor<double> src(Shape{1, 2, 2}, 1.0);
  CHECK_THROWS_AS(camo::affine_sample(src, 0.0, 0.0, 2, 2), camo::ParamError);
  CHECK_THROWS_AS(camo::affine_sample(src, 0.0, -1.0, 2, 2), camo::ParamError);
}

TEST_CASE("affine_sample gradient matches finite differences") {
  Rng rng(23);
  auto src = oracle::random_tensor<double>(Shape{2, 4, 4}, rng, 0.0, 1.0);
  const double err = camo::grad_check(
      [](const Tensor<double>& t) {
        auto s = camo::affine_sample(t, 0.35, 1.4, 6, 6);
        return camo::mean(camo::mul(s.image, s.image));
      },
      src);
  CHECK(err < 1e-4);
}

TEST_CASE("alpha_composite identities") {
  Rng rng(17);
  auto image = oracle::random_tensor<float>(Shape{3, 5, 5}, rng, 0.0, 1.0);
  auto patch = oracle::random_tensor<float>(Shape{3, 5, 5}, rng, 0.0, 1.0);
  Tensor<float> full_mask(Shape{1, 5, 5}, 1.0f);

  SECTION("alpha 0 is the identity on image, bit for bit") {
    auto out = camo::alpha_composite(image, patch, full_mask, 0.0);
    CHECK(out.values() == image.values());
  }
  SECTION("alpha 1 with full mask is the identity on patch") {
    auto out = camo::alpha_composite(image, patch, full_mask, 1.0);
    CHECK(out.values() == patch.values());
  }
  SECTION("partial mask keeps uncovered pixels bit-identical") {
    std::vector<float> m(25, 0.0f);
    for (int i = 0; i < 12; ++i) m[i] = 1.0f;
    Tensor<float> mask(Shape{1, 5, 5}, m);
    auto out = camo::alpha_composite(image, patch, mask, 0.7);
    for (int c = 0; c < 3; ++c)
      for (int i = 12; i < 25; ++i)
        CHECK(out.values()[c * 25 + i] == image.values()[c * 25 + i]);
  }
  SECTION("direct blend value 0.4*1.0 + 0.6*0.5 = 0.7") {
    Tensor<double> img1(Shape{1, 1, 1}, std::vector<double>{0.5});
    Tensor<double> pat1(Shape{1, 1, 1}, std::vector<double>{1.0});
    Tensor<double> m1(Shape{1, 1, 1}, std::vector<double>{1.0});
    auto out = camo::alpha_composite(img1, pat1, m1, 0.4);
    CHECK(out.values()[0] == Catch::Approx(0.7).margin(1e-12));
  }
}

TEST_CASE("alpha_composite validates parameters") {
  Tensor<float> image(Shape{3, 2, 2}, 0.5f);
  Tensor<float> patch(Shape{3, 2, 2}, 0.5f);
  Tensor<float> mask(Shape{1, 2, 2}, 1.0f);
  CHECK_THROWS_AS(camo::alpha_composite(image, patch, mask, -0.1),
                  camo::ParamError);
  CHECK_THROWS_AS(camo::alpha_composite(image, patch, mask, 1.1),
                  camo::ParamError);
  Tensor<float> badmask(Shape{1, 2, 2}, 0.5f);
  CHECK_THROWS_AS(camo::alpha_composite(image, patch, badmask, 0.5),
                  camo::ParamError);
  Tensor<float> smallpatch(Shape{3, 2, 1}, 0.5f);
  CHECK_THROWS_AS(camo::alpha_composite(image, smallpatch, mask, 0.5),
                  camo::DimError);
}

TEST_CASE("alpha_composite patch gradient equals alpha at masked pixels") {
  Rng rng(29);
  auto image = oracle::random_tensor<double>(Shape{1, 3, 3}, rng, 0.0, 1.0);
  auto patch = oracle::random_tensor<double>(Shape{1, 3, 3}, rng, 0.0, 1.0);
  std::vector<double> m{1, 0, 1, 0, 1, 0, 1, 0, 1};
  Tensor<double> mask(Shape{1, 3, 3}, m);

  Tensor<double> p(patch.shape(), patch.values(), true);
  const double alpha = 0.37;
  auto out = camo::alpha_composite(image, p, mask, alpha);
  camo::sum(out).backward();
  for (std::size_t i = 0; i < m.size(); ++i)
    CHECK(p.grad()[i] == Catch::Approx(m[i] * alpha).margin(1e-12));
}

TEST_CASE("alpha_composite pipeline gradcheck at 64-bit") {
  Rng rng(41);
  auto image = oracle::random_tensor<double>(Shape{2, 4, 4}, rng, 0.0, 1.0);
  auto patch0 = oracle::random_tensor<double>(Shape{2, 3, 3}, rng, 0.1, 0.9);
  std::vector<double> m(16, 0.0);
  for (int i : {0, 1, 4, 5, 10, 15}) m[i] = 1.0;
  Tensor<double> mask(Shape{1, 4, 4}, m);

  const double err = camo::grad_check(
      [&](const Tensor<double>& t) {
        auto up = camo::affine_sample(t, 0.2, 4.0 / 3.0, 4, 4);
        auto blended = camo::alpha_composite(image, up.image, mask, 0.6);
        return camo::mean(camo::mul(blended, blended));
      },
      patch0);
  CHECK(err < 1e-4);
}

TEST_CASE("embed pastes with clipping and crops gradient") {
  Tensor<double> src(Shape{1, 2, 2}, std::vector<double>{1, 2, 3, 4}, true);
  auto out = camo::embed(src, 3, 3, 2, 2);  // clipped to one pixel
  CHECK(out.values()[8] == 1.0);
  CHECK(out.values()[0] == 0.0);
  camo::sum(out).backward();
  CHECK(src.grad() == std::vector<double>{1, 0, 0, 0});

  auto neg = camo::embed(src, 3, 3, -1, -1);
  CHECK(neg.values()[0] == 4.0);
}
