#include <doctest.h>

#include <random>

#include "facefuse/dam.hpp"
#include "facefuse/error.hpp"
#include "facefuse/nn/ops.hpp"
#include "facefuse/tensor_convert.hpp"
#include "oracles.hpp"

using namespace facefuse;
using nn::Var;

TEST_CASE("local NCC matches the centred-window oracle") {
  std::mt19937_64 rng(1);
  for (int trial = 0; trial < 20; ++trial) {
    const int h = 9 + trial % 5, w = 10 + trial % 4, c = 1 + (trial % 2) * 2;
    const int window = 3 + 2 * (trial % 4);
    const auto a = oracle::random_image(rng, h, w, c, ValueRange::signed_unit);
    const auto b = oracle::random_image(rng, h, w, c, ValueRange::signed_unit);
    CHECK(oracle::rel_err(dam::local_ncc_loss(a, b, window),
                          oracle::local_ncc(a, b, window, dam::kNccEpsilon)) < 1e-9);
  }
}

TEST_CASE("local NCC of an image with itself approaches -1") {
  std::mt19937_64 rng(2);
  const auto a = oracle::random_image(rng, 16, 16, 1);
  CHECK(dam::local_ncc_loss(a, a, 9) == doctest::Approx(-1.0).epsilon(1e-3));
}

TEST_CASE("local NCC rejects even or oversized windows") {
  std::mt19937_64 rng(3);
  const auto a = oracle::random_image(rng, 8, 8, 1);
  CHECK_THROWS_AS(dam::local_ncc_loss(a, a, 4), InvalidArgument);
  CHECK_THROWS_AS(dam::local_ncc_loss(a, a, 9), InvalidArgument);
}

TEST_CASE("smoothness matches the forward-difference oracle") {
  std::mt19937_64 rng(4);
  for (int trial = 0; trial < 20; ++trial) {
    const auto f = oracle::random_field(rng, 5 + trial % 7, 6 + trial % 5, 3.0);
    CHECK(oracle::rel_err(dam::smoothness_loss(f), oracle::smoothness(f)) < 1e-12);
  }
}

TEST_CASE("smoothness of a constant field is zero") {
  std::vector<double> v(8 * 8 * 2, 1.7);
  CHECK(dam::smoothness_loss(DeformationField(8, 8, v)) == 0.0);
}

TEST_CASE("warp matches the bilinear oracle") {
  std::mt19937_64 rng(5);
  for (int trial = 0; trial < 10; ++trial) {
    const auto img = oracle::random_image(rng, 12, 9, 3);
    const auto f = oracle::random_field(rng, 12, 9, 4.0);
    const auto got = dam::warp(img, f);
    const auto want = oracle::warp(img, f);
    for (std::size_t i = 0; i < want.size(); ++i) CHECK(got.pixels()[i] == doctest::Approx(want[i]).epsilon(1e-12));
  }
}

TEST_CASE("zero field warp is the identity and integer shifts move pixels") {
  std::mt19937_64 rng(6);
  const auto img = oracle::random_image(rng, 10, 10, 1);
  CHECK(dam::warp(img, DeformationField::zeros(10, 10)) == img);
  std::vector<double> v(10 * 10 * 2, 0.0);
  for (std::size_t i = 0; i < v.size(); i += 2) v[i] = 1.0;
  const auto shifted = dam::warp(img, DeformationField(10, 10, v));
  CHECK(shifted.at(3, 4) == img.at(3, 5));
  CHECK(shifted.at(3, 9) == img.at(3, 9));
}

TEST_CASE("dam_loss is similarity plus weighted smoothness") {
  std::mt19937_64 rng(7);
  const auto a = oracle::random_image(rng, 16, 16, 1);
  const auto b = oracle::random_image(rng, 16, 16, 1);
  const auto f = oracle::random_field(rng, 16, 16, 1.0);
  const double want = oracle::local_ncc(a, dam::warp(b, f), 9, dam::kNccEpsilon) + 0.5 * oracle::smoothness(f);
  CHECK(oracle::rel_err(dam::dam_loss(a, b, f, {0.5}), want) < 1e-9);
  CHECK_THROWS_AS(dam::dam_loss(a, b, f, {-1.0}), InvalidArgument);
}

namespace {

nn::Tensor<double> random_tensor(std::mt19937_64& rng, nn::Shape s, double lo, double hi) {
  std::uniform_real_distribution<double> u(lo, hi);
  nn::Tensor<double> t(s);
  for (auto& v : t.values()) v = u(rng);
  return t;
}

}  // namespace

TEST_CASE("NCC gradient agrees with central differences") {
  std::mt19937_64 rng(8);
  auto a = Var<double>::parameter(random_tensor(rng, {2, 2, 16, 16}, -1, 1));
  auto b = Var<double>::parameter(random_tensor(rng, {2, 2, 16, 16}, -1, 1));
  nn::backward(nn::local_ncc_loss(a, b, 9));
  const auto r = oracle::grad_check({&a.mutable_value(), &b.mutable_value()}, {&a.grad(), &b.grad()}, [&] {
    nn::NoGradGuard g;
    return nn::local_ncc_loss(a, b, 9).item();
  });
  CHECK(r.max_rel < 1e-4);
}

TEST_CASE("smoothness gradient agrees with central differences") {
  std::mt19937_64 rng(9);
  auto f = Var<double>::parameter(random_tensor(rng, {1, 2, 16, 16}, -2, 2));
  nn::backward(nn::smoothness_loss(f));
  const auto r = oracle::grad_check({&f.mutable_value()}, {&f.grad()}, [&] {
    nn::NoGradGuard g;
    return nn::smoothness_loss(f).item();
  });
  CHECK(r.max_rel < 1e-4);
}

TEST_CASE("warp gradient agrees with central differences away from grid lines") {
  std::mt19937_64 rng(10);
  auto img = Var<double>::parameter(random_tensor(rng, {1, 2, 16, 16}, -1, 1));
  // Integer offsets plus fractions in [0.1, 0.9] keep every sample off the
  // bilinear kinks and away from the clamped border.
  std::uniform_int_distribution<int> whole(-2, 1);
  std::uniform_real_distribution<double> frac(0.1, 0.9);
  nn::Tensor<double> fv({1, 2, 16, 16});
  for (int c = 0; c < 2; ++c) {
    for (int y = 0; y < 16; ++y) {
      for (int x = 0; x < 16; ++x) {
        const int base = c == 0 ? x : y;
        int d = whole(rng);
        if (base + d < 0) d = -base;
        if (base + d > 14) d = 14 - base;
        fv.at(0, c, y, x) = d + frac(rng);
      }
    }
  }
  auto field = Var<double>::parameter(fv);
  auto probe = Var<double>::constant(random_tensor(rng, {1, 2, 16, 16}, -1, 1));
  auto loss = [&] { return nn::mean(nn::mul(nn::warp(img, field), probe)); };
  nn::backward(loss());
  const auto r = oracle::grad_check({&img.mutable_value(), &field.mutable_value()},
                                    {&img.grad(), &field.grad()}, [&] {
                                      nn::NoGradGuard g;
                                      return loss().item();
                                    });
  CHECK(r.max_rel < 1e-4);
}

TEST_CASE("registration net starts near the identity warp") {
  dam::RegistrationNet net({}, 3);
  std::mt19937_64 rng(11);
  const auto a = oracle::random_image(rng, 16, 16, 3);
  const auto f = dam::predict_field(net, a, a);
  CHECK(f.height() == 16);
  CHECK(f.max_magnitude() < 0.5);
  dam::RegistrationNetConfig zero;
  zero.field_init_scale = 0.0;
  CHECK(dam::predict_field(dam::RegistrationNet(zero, 3), a, a).max_magnitude() == 0.0);
}

TEST_CASE("registration net rejects sides that do not divide by the level stride") {
  dam::RegistrationNet net({}, 3);
  std::mt19937_64 rng(12);
  const auto a = oracle::random_image(rng, 18, 16, 3);
  CHECK_THROWS_AS(dam::predict_field(net, a, a), ShapeMismatch);
}
