#include <doctest.h>

#include <cmath>

#include "advarena/ops.hpp"
#include "checks.hpp"
#include "helpers.hpp"

using namespace advarena;
using namespace testutil;

TEST_CASE("tensor rejects zero extents and mismatched data") {
  CHECK_THROWS_AS(Tensor({0, 2}), std::invalid_argument);
  CHECK_THROWS_AS(Tensor({2, 2}, std::vector<double>{1, 2, 3}), std::invalid_argument);
  const Tensor t({2, 3}, 1.5);
  CHECK(t.size() == 6);
  CHECK(t.reshaped({3, 2}).shape() == Shape{3, 2});
  CHECK_THROWS(t.reshaped({4, 2}));
}

TEST_CASE("conv2d on a constant field sums the window") {
  const Tensor x({1, 3, 3}, 1.0), k({1, 1, 2, 2}, 1.0);
  const Tensor y = ops::conv2d(x, k, 1, 0);
  REQUIRE(y.shape() == Shape{1, 2, 2});
  for (double v : y.data()) CHECK(v == 4.0);
}

TEST_CASE("conv2d with zero kernels is zero") {
  Rng rng(1);
  const Tensor x = random_image(2, 5, 5, rng);
  const Tensor y = ops::conv2d(x, Tensor({3, 2, 3, 3}), 1, 1);
  for (double v : y.data()) CHECK(v == 0.0);
}

TEST_CASE("conv2d rejects fractional output extents and channel mismatch") {
  const Tensor x({1, 32, 32});
  CHECK_THROWS_AS(ops::conv2d(x, Tensor({1, 1, 3, 3}), 2, 1), std::invalid_argument);
  CHECK_NOTHROW(ops::conv2d(x, Tensor({1, 1, 4, 4}), 2, 1));
  CHECK_THROWS_AS(ops::conv2d(x, Tensor({1, 2, 3, 3}), 1, 1), std::invalid_argument);
  CHECK_THROWS_AS(ops::conv2d(Tensor({1, 2, 2}), Tensor({1, 1, 3, 3}), 1, 0), std::invalid_argument);
}

TEST_CASE("dense hand examples") {
  const Tensor w({2, 2}, std::vector<double>{1, 2, 3, 4});
  const Tensor y = ops::dense(Tensor({2}, 1.0), w, Tensor({2}));
  CHECK(y[0] == 3.0);
  CHECK(y[1] == 7.0);
  const Tensor eye({2, 2}, std::vector<double>{1, 0, 0, 1});
  const Tensor x({2}, std::vector<double>{0.25, -3});
  CHECK(ops::dense(x, eye, Tensor({2})) == x);
  CHECK_THROWS_AS(ops::dense(Tensor({3}), w, Tensor({2})), std::invalid_argument);
}

TEST_CASE("elementwise examples") {
  const Tensor a({3}, std::vector<double>{-1, 0, 2});
  CHECK(ops::relu(a).vec() == std::vector<double>{0, 0, 2});
  const Tensor s({3}, std::vector<double>{-0.3, 0, 5});
  CHECK(ops::sign(s).vec() == std::vector<double>{-1, 0, 1});
  const Tensor r({2}, std::vector<double>{2.6, -0.4});
  CHECK(ops::clip_range(ops::round(r), -2, 2).vec() == std::vector<double>{2, 0});
  CHECK(ops::round(Tensor({2}, std::vector<double>{0.5, -0.5})).vec() == std::vector<double>{1, -1});
  CHECK_THROWS(ops::clip_range(a, 1, 0));
  const Tensor c({3}, std::vector<double>{-0.5, 0.3, 1.7});
  CHECK(ops::clip01(c).vec() == std::vector<double>{0, 0.3, 1});
  // relu backward is zero at exactly 0
  CHECK(ops::relu_backward(a, Tensor({3}, 1.0)).vec() == std::vector<double>{0, 0, 1});
}

TEST_CASE("softmax cross-entropy examples") {
  const auto lg = ops::softmax_cross_entropy(Tensor({2}), 0);
  CHECK(lg.loss == doctest::Approx(std::log(2.0)).epsilon(1e-12));
  CHECK(lg.grad[0] == doctest::Approx(-0.5));
  CHECK(lg.grad[1] == doctest::Approx(0.5));
  CHECK(ops::softmax_cross_entropy(Tensor({2}, std::vector<double>{100, 0}), 0).loss < 1e-10);
  CHECK_THROWS_AS(ops::softmax_cross_entropy(Tensor({2}), 2), std::invalid_argument);

  Rng rng(3);
  for (int t = 0; t < 100; ++t) {
    const Tensor l = random_tensor({7}, rng, -20, 20);
    const auto r = ops::softmax_cross_entropy(l, rng.uniform_int(7));
    CHECK(r.loss >= 0.0);
    CHECK(std::abs(sum(r.grad)) <= 1e-12);
  }
}

TEST_CASE("bilinear resize examples") {
  Rng rng(4);
  const Tensor x = random_image(3, 5, 7, rng);
  CHECK(ops::bilinear_resize(x, 5, 7) == x);
  const Tensor col({1, 2, 1}, std::vector<double>{0, 1});
  CHECK(ops::bilinear_resize(col, 3, 1).vec() == std::vector<double>{0, 0.5, 1});
  CHECK_THROWS(ops::bilinear_resize(x, 0, 3));
}

TEST_CASE("projective warp examples") {
  Rng rng(5);
  const Tensor x = random_image(2, 6, 6, rng);
  CHECK(ops::projective_warp(x, ops::WarpParams::identity()) == x);
  const Tensor row({1, 1, 3}, std::vector<double>{0.1, 0.2, 0.3});
  CHECK(ops::projective_warp(row, ops::WarpParams::translation(1, 0)).vec() == std::vector<double>{0, 0.1, 0.2});
  ops::WarpParams bad;
  bad.theta = {0, 0, 0, 0, 0, 0, 0, 0};
  CHECK_THROWS_AS(ops::projective_warp(x, bad), std::invalid_argument);
}

TEST_CASE("median filter examples and range property") {
  const Tensor c({1, 4, 4}, 0.3);
  CHECK(ops::median_filter_2x2(c) == c);
  const Tensor a({1, 2, 2}, std::vector<double>{0, 0, 1, 1});
  CHECK(ops::median_filter_2x2(a).at(0, 0, 0) == 0.5);
  const Tensor b({1, 2, 2}, std::vector<double>{0, 0, 0, 1});
  CHECK(ops::median_filter_2x2(b).at(0, 0, 0) == 0.0);

  Rng rng(6);
  const Tensor x = random_image(2, 5, 4, rng);
  const Tensor m = ops::median_filter_2x2(x);
  for (std::size_t ch = 0; ch < 2; ++ch)
    for (std::size_t i = 0; i < 5; ++i)
      for (std::size_t j = 0; j < 4; ++j) {
        double lo = 2, hi = -1;
        for (std::size_t di = 0; di < 2; ++di)
          for (std::size_t dj = 0; dj < 2; ++dj) {
            const double v = x.at(ch, std::min<std::size_t>(i + di, 4), std::min<std::size_t>(j + dj, 3));
            lo = std::min(lo, v);
            hi = std::max(hi, v);
          }
        CHECK(m.at(ch, i, j) >= lo);
        CHECK(m.at(ch, i, j) <= hi);
      }
}

TEST_CASE("pad, flip, upsample and channel helpers") {
  const Tensor one({1, 1, 1}, 0.7);
  const Tensor p = ops::pad_zero(one, 1, 1, 1, 1);
  REQUIRE(p.shape() == Shape{1, 3, 3});
  CHECK(p.at(0, 1, 1) == 0.7);
  CHECK(sum(p) == doctest::Approx(0.7));
  Rng rng(7);
  const Tensor x = random_image(2, 3, 4, rng);
  CHECK(ops::pad_zero(x, 0, 0, 0, 0) == x);
  const Tensor row({1, 1, 3}, std::vector<double>{1, 2, 3});
  CHECK(ops::hflip(row).vec() == std::vector<double>{3, 2, 1});
  CHECK(ops::hflip(ops::hflip(x)) == x);
  const Tensor sym({1, 1, 3}, std::vector<double>{4, 5, 4});
  CHECK(ops::hflip(sym) == sym);
  // W' = 310 padded to 331 leaves (331 - 310 + 1)^2 placements
  CHECK((331 - 310 + 1) * (331 - 310 + 1) == 484);

  const Tensor up = ops::upsample_nearest(x, 2);
  CHECK(up.shape() == Shape{2, 6, 8});
  const Tensor u = random_tensor(up.shape(), rng);
  CHECK(adjoint_gap(x, up, u, ops::upsample_nearest_backward(u, 2)) <= 1e-12);
  const Tensor y = random_image(1, 3, 4, rng);
  const auto [a, b] = ops::split_channels(ops::concat_channels(x, y), 2);
  CHECK(a == x);
  CHECK(b == y);
}

TEST_CASE("finite-difference gradient suite") {
  const auto conv = check_conv(100, 11);
  const auto dense = check_dense(100, 12);
  const auto relu = check_relu(100, 13);
  const auto ce = check_cross_entropy(100, 14);
  const auto resize = check_resize(100, 15);
  const auto warp = check_warp(100, 16);
  const auto model = check_model_input_grad(10, 17);
  CHECK(conv.fd_rel_error <= 1e-5);
  CHECK(dense.fd_rel_error <= 1e-5);
  CHECK(relu.fd_rel_error <= 1e-5);
  CHECK(ce.fd_rel_error <= 1e-5);
  CHECK(resize.fd_rel_error <= 1e-5);
  CHECK(warp.fd_rel_error <= 1e-5);
  CHECK(model.fd_rel_error <= 1e-5);
}

TEST_CASE("adjoint identities of the linear operators") {
  CHECK(check_conv(50, 21).adjoint_gap <= 1e-10);
  CHECK(check_dense(50, 22).adjoint_gap <= 1e-10);
  CHECK(check_resize(50, 23).adjoint_gap <= 1e-10);
  CHECK(check_warp(50, 24).adjoint_gap <= 1e-10);
  CHECK(check_pad(50, 25).adjoint_gap <= 1e-10);
}

TEST_CASE("kernels are deterministic") {
  Rng rng(8);
  const Tensor x = random_image(2, 6, 6, rng), k = random_tensor({3, 2, 3, 3}, rng);
  CHECK(ops::conv2d(x, k, 1, 1) == ops::conv2d(x, k, 1, 1));
  ops::WarpParams p;
  p.theta[1] = 0.05;
  CHECK(ops::projective_warp(x, p) == ops::projective_warp(x, p));
}
