#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <functional>

#include "fdn/autodiff.hpp"
#include "fdn/rng.hpp"

using namespace fdn;
using ad::Var;
using D = double;

namespace {

std::vector<D> random_vec(size_t n, Rng& rng, double lo = -1.0, double hi = 1.0) {
  std::vector<D> v(n);
  for (auto& x : v) x = rng.uniform(lo, hi);
  return v;
}

// central-difference check of dLoss/dInput against the recorded gradient,
// for every element of every input tensor
void check_grads(const std::vector<Var<D>>& inputs,
                 const std::function<Var<D>()>& forward, double h = 1e-4,
                 double tol = 1e-3) {
  Var<D> loss = forward();
  REQUIRE(loss.size() == 1);
  for (const auto& in : inputs) in.zero_grad();
  loss.backward();
  for (const auto& in : inputs) {
    auto& val = in.val();
    const auto grad = in.grad();  // copy before the next forwards touch it
    for (size_t i = 0; i < val.size(); ++i) {
      const double keep = val[i];
      val[i] = keep + h;
      const double fp = forward().val()[0];
      val[i] = keep - h;
      const double fm = forward().val()[0];
      val[i] = keep;
      const double fd = (fp - fm) / (2.0 * h);
      const double scale = std::max({std::fabs(fd), std::fabs(grad[i]), 1e-6});
      CHECK(std::fabs(fd - grad[i]) / scale < tol);
    }
  }
}

}  // namespace

TEST_CASE("linear layer gradient matches finite differences") {
  Rng rng(1);
  auto x = Var<D>::from({3, 4}, random_vec(12, rng), true);
  auto W = Var<D>::from({2, 4}, random_vec(8, rng), true);
  auto b = Var<D>::from({2}, random_vec(2, rng), true);
  std::vector<D> target = random_vec(6, rng);
  check_grads({x, W, b}, [&] { return ad::mse_loss(ad::linear(x, W, b), target); });
}

TEST_CASE("relu and sigmoid gradients") {
  Rng rng(2);
  // keep relu inputs away from the kink
  std::vector<D> xv = random_vec(12, rng);
  for (auto& v : xv)
    if (std::fabs(v) < 0.05) v = 0.1;
  auto x = Var<D>::from({3, 4}, xv, true);
  std::vector<D> target = random_vec(12, rng);
  check_grads({x}, [&] { return ad::mse_loss(ad::relu(x), target); });
  check_grads({x}, [&] { return ad::mse_loss(ad::sigmoid(x), target); });
}

TEST_CASE("sigmoid output stays in (0,1)") {
  // +-30 keeps 1/(1+exp(-x)) representably inside the open interval
  auto x = Var<D>::from({1, 3}, {-30.0, 0.0, 30.0});
  const auto y = ad::sigmoid(x).val();
  for (double v : y) {
    CHECK(v > 0.0);
    CHECK(v < 1.0);
  }
  CHECK(y[1] == doctest::Approx(0.5));
}

TEST_CASE("conv2d: shape, values, gradients") {
  Rng rng(3);
  const int N = 2, IC = 2, OC = 3, H = 6;
  auto x = Var<D>::from({N, IC, H, H}, random_vec(N * IC * H * H, rng), true);
  auto W = Var<D>::from({OC, IC, 3, 3}, random_vec(OC * IC * 9, rng), true);
  auto b = Var<D>::from({OC}, random_vec(OC, rng), true);
  auto y = ad::conv2d(x, W, b);
  CHECK(y.shape() == std::vector<int>{N, OC, 3, 3});
  // direct value check at one output location (n=0, oc=1, oy=1, ox=1):
  // input window centered at (2*1, 2*1) = (2,2)
  {
    double want = b.val()[1];
    for (int ic = 0; ic < IC; ++ic)
      for (int ky = 0; ky < 3; ++ky)
        for (int kx = 0; kx < 3; ++kx) {
          const int iy = 1 * 2 - 1 + ky, ix = 1 * 2 - 1 + kx;
          want += W.val()[((1 * IC + ic) * 3 + ky) * 3 + kx] *
                  x.val()[((0 * IC + ic) * H + iy) * H + ix];
        }
    CHECK(y.val()[(0 * OC + 1) * 9 + 1 * 3 + 1] == doctest::Approx(want).epsilon(1e-12));
  }
  std::vector<D> target = random_vec(y.size(), rng);
  check_grads({x, W, b}, [&] { return ad::mse_loss(ad::conv2d(x, W, b), target); });
}

TEST_CASE("deconv2d: shape doubles, gradients, conv inverse shape") {
  Rng rng(4);
  const int N = 2, IC = 3, OC = 2, H = 4;
  auto x = Var<D>::from({N, IC, H, H}, random_vec(N * IC * H * H, rng), true);
  auto W = Var<D>::from({IC, OC, 3, 3}, random_vec(IC * OC * 9, rng), true);
  auto b = Var<D>::from({OC}, random_vec(OC, rng), true);
  auto y = ad::deconv2d(x, W, b);
  CHECK(y.shape() == std::vector<int>{N, OC, 2 * H, 2 * H});
  std::vector<D> target = random_vec(y.size(), rng);
  check_grads({x, W, b}, [&] { return ad::mse_loss(ad::deconv2d(x, W, b), target); });
}

TEST_CASE("five stride-2 convs take 64 to 2; five deconvs bring it back") {
  int h = 64;
  for (int i = 0; i < 5; ++i) h = ad::conv_out(h);
  CHECK(h == 2);
  for (int i = 0; i < 5; ++i) h *= 2;
  CHECK(h == 64);
}

TEST_CASE("batchnorm") {
  Rng rng(5);
  SUBCASE("train mode normalizes the batch and FD-checks") {
    auto x = Var<D>::from({4, 3}, random_vec(12, rng), true);
    auto gamma = Var<D>::from({3}, random_vec(3, rng, 0.5, 1.5), true);
    auto beta = Var<D>::from({3}, random_vec(3, rng), true);
    std::vector<D> target = random_vec(12, rng);
    std::vector<D> rm(3, 0.0), rv(3, 1.0);
    check_grads({x, gamma, beta}, [&] {
      auto rm2 = rm;
      auto rv2 = rv;  // keep running stats fixed across FD evaluations
      return ad::mse_loss(ad::batchnorm(x, gamma, beta, rm2, rv2, true), target);
    });
    // per-channel batch statistics of the normalized output
    auto rm2 = rm, rv2 = rv;
    auto y = ad::batchnorm(x, gamma, beta, rm2, rv2, true);
    for (int c = 0; c < 3; ++c) {
      double mean = 0.0;
      for (int n = 0; n < 4; ++n) mean += y.val()[n * 3 + c];
      mean /= 4.0;
      CHECK(mean == doctest::Approx(beta.val()[c]).epsilon(1e-9));
    }
    // running stats moved toward the batch stats
    CHECK(rm2 != rm);
  }
  SUBCASE("eval mode with unit running stats is an affine map") {
    auto x = Var<D>::from({2, 3}, random_vec(6, rng), true);
    auto gamma = Var<D>::from({3}, std::vector<D>(3, 1.0), true);
    auto beta = Var<D>::from({3}, std::vector<D>(3, 0.0), true);
    std::vector<D> rm(3, 0.0), rv(3, 1.0);
    auto y = ad::batchnorm(x, gamma, beta, rm, rv, false);
    for (size_t i = 0; i < x.size(); ++i)
      CHECK(y.val()[i] == doctest::Approx(x.val()[i]).epsilon(1e-4));
    CHECK(rm == std::vector<D>(3, 0.0));  // eval never updates running stats
  }
  SUBCASE("4-D eval gradients") {
    auto x = Var<D>::from({2, 2, 3, 3}, random_vec(36, rng), true);
    auto gamma = Var<D>::from({2}, random_vec(2, rng, 0.5, 1.5), true);
    auto beta = Var<D>::from({2}, random_vec(2, rng), true);
    std::vector<D> rm = random_vec(2, rng), rv = {0.7, 1.9};
    std::vector<D> target = random_vec(36, rng);
    check_grads({x, gamma, beta}, [&] {
      return ad::mse_loss(ad::batchnorm(x, gamma, beta, rm, rv, false), target);
    });
  }
}

TEST_CASE("concat and reshape gradients") {
  Rng rng(6);
  auto a = Var<D>::from({2, 3}, random_vec(6, rng), true);
  auto b = Var<D>::from({2, 2}, random_vec(4, rng), true);
  auto y = ad::concat_cols<D>({a, b});
  CHECK(y.shape() == std::vector<int>{2, 5});
  CHECK(y.val()[0] == a.val()[0]);
  CHECK(y.val()[3] == b.val()[0]);
  CHECK(y.val()[5] == a.val()[3]);
  std::vector<D> target = random_vec(10, rng);
  check_grads({a, b}, [&] {
    return ad::mse_loss(ad::concat_cols<D>({a, b}), target);
  });
  check_grads({a}, [&] {
    return ad::mse_loss(ad::reshape(a, {3, 2}), std::vector<D>(target.begin(), target.begin() + 6));
  });
}

TEST_CASE("gradients accumulate across backward calls") {
  auto x = Var<D>::from({1, 2}, {0.3, -0.4}, true);
  std::vector<D> target = {0.0, 0.0};
  auto loss = ad::mse_loss(x, target);
  x.zero_grad();
  loss.backward();
  const auto g1 = x.grad();
  loss.backward();
  const auto g2 = x.grad();
  for (size_t i = 0; i < g1.size(); ++i)
    CHECK(g2[i] == doctest::Approx(2.0 * g1[i]).epsilon(1e-12));
}

TEST_CASE("needs_grad pruning skips constant branches") {
  Rng rng(7);
  auto x = Var<D>::from({2, 3}, random_vec(6, rng), false);  // no grad wanted
  auto W = Var<D>::from({2, 3}, random_vec(6, rng), true);
  auto b = Var<D>::from({2}, random_vec(2, rng), true);
  auto loss = ad::mse_loss(ad::linear(x, W, b), std::vector<D>(4, 0.0));
  W.zero_grad();
  b.zero_grad();
  loss.backward();
  CHECK(x.node().grad.empty());  // never materialized
  bool any = false;
  for (double g : W.grad()) any = any || g != 0.0;
  CHECK(any);
}

TEST_CASE("adam") {
  SUBCASE("first step moves each weight by ~lr against the gradient sign") {
    auto w = Var<D>::from({2}, {1.0, -2.0}, true);
    w.grad() = {0.5, -3.0};
    ad::Adam<D> opt(0.1);
    opt.step({w});
    // bias-corrected first step: lr * g / (|g| + eps) = lr * sign(g)
    CHECK(w.val()[0] == doctest::Approx(1.0 - 0.1).epsilon(1e-6));
    CHECK(w.val()[1] == doctest::Approx(-2.0 + 0.1).epsilon(1e-6));
    CHECK(w.grad() == std::vector<D>(2, 0.0));  // grads cleared
  }
  SUBCASE("zero gradient leaves the weight untouched") {
    auto w = Var<D>::from({1}, {0.7}, true);
    w.grad() = {0.0};
    ad::Adam<D> opt(0.1);
    opt.step({w});
    CHECK(w.val()[0] == doctest::Approx(0.7).epsilon(1e-12));
  }
  SUBCASE("minimizes a quadratic") {
    auto w = Var<D>::from({1}, {3.0}, true);
    ad::Adam<D> opt(0.05);
    for (int i = 0; i < 400; ++i) {
      auto loss = ad::mse_loss(w, std::vector<D>{1.0});
      w.zero_grad();
      loss.backward();
      opt.step({w});
    }
    CHECK(w.val()[0] == doctest::Approx(1.0).epsilon(1e-2));
  }
}
