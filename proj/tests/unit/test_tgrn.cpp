#include <doctest.h>

#include <cmath>
#include <random>

#include "facefuse/error.hpp"
#include "facefuse/evalkit.hpp"
#include "facefuse/nn/ops.hpp"
#include "facefuse/tensor_convert.hpp"
#include "facefuse/tgrn.hpp"
#include "oracles.hpp"

using namespace facefuse;
using nn::Var;

TEST_CASE("fuse matches the per-channel weighted sum") {
  std::mt19937_64 rng(1);
  std::uniform_real_distribution<double> u(-2, 2);
  for (int trial = 0; trial < 20; ++trial) {
    const int d = 1 + trial % 6;
    const auto ze = oracle::random_feature(rng, 3 + trial % 4, 2 + trial % 5, d);
    const auto zt = oracle::random_feature(rng, ze.height(), ze.width(), d);
    tgrn::FusionWeights w;
    for (int c = 0; c < d; ++c) {
      w.w_e.push_back(u(rng));
      w.w_t.push_back(u(rng));
    }
    const auto got = tgrn::fuse(ze, zt, w);
    const auto want = oracle::fuse(ze, zt, w.w_e, w.w_t);
    for (std::size_t i = 0; i < want.size(); ++i) CHECK(oracle::rel_err(got.values()[i], want[i]) < 1e-12);
  }
}

TEST_CASE("fuse with one-hot weights selects a branch") {
  std::mt19937_64 rng(2);
  const auto ze = oracle::random_feature(rng, 4, 4, 3);
  const auto zt = oracle::random_feature(rng, 4, 4, 3);
  CHECK(tgrn::fuse(ze, zt, {{1, 1, 1}, {0, 0, 0}}) == ze);
  CHECK(tgrn::fuse(ze, zt, {{0, 0, 0}, {1, 1, 1}}) == zt);
  CHECK_THROWS_AS(tgrn::fuse(ze, zt, {{1, 1}, {0, 0}}), ShapeMismatch);
}

TEST_CASE("adaptive max pool takes the maximum over each bin") {
  std::mt19937_64 rng(3);
  const auto z = oracle::random_feature(rng, 7, 5, 2);
  const auto p = tgrn::adaptive_max_pool(z, 3, 2);
  for (int oy = 0; oy < 3; ++oy) {
    for (int ox = 0; ox < 2; ++ox) {
      for (int c = 0; c < 2; ++c) {
        double m = -1e300;
        for (int y = oy * 7 / 3; y < ((oy + 1) * 7 + 2) / 3; ++y) {
          for (int x = ox * 5 / 2; x < ((ox + 1) * 5 + 1) / 2; ++x) m = std::max(m, z.at(y, x, c));
        }
        CHECK(p.at(oy, ox, c) == m);
      }
    }
  }
  CHECK_THROWS_AS(tgrn::adaptive_max_pool(z, 8, 2), ShapeMismatch);
}

TEST_CASE("global average pool is the per-channel mean") {
  std::mt19937_64 rng(4);
  const auto z = oracle::random_feature(rng, 4, 6, 3);
  const auto v = tgrn::global_avg_pool(z);
  for (int c = 0; c < 3; ++c) {
    double s = 0.0;
    for (int y = 0; y < 4; ++y) {
      for (int x = 0; x < 6; ++x) s += z.at(y, x, c);
    }
    CHECK(v[c] == doctest::Approx(s / 24).epsilon(1e-12));
  }
}

TEST_CASE("sigmoid fusion weights lie in (0, 1)") {
  nn::ParameterSet<double> params;
  nn::Rng rng(5);
  tgrn::FusionMlp<double> mlp(params, "mlp", 8, 16, tgrn::FusionActivation::sigmoid, rng);
  std::mt19937_64 data(6);
  std::normal_distribution<double> n(0, 3);
  std::vector<double> ve(8), vt(8);
  for (int i = 0; i < 8; ++i) {
    ve[i] = n(data);
    vt[i] = n(data);
  }
  const auto w = tgrn::fusion_weights(mlp, ve, vt);
  REQUIRE(w.w_e.size() == 8);
  for (int i = 0; i < 8; ++i) {
    CHECK(w.w_e[i] > 0.0);
    CHECK(w.w_e[i] < 1.0);
    CHECK(w.w_t[i] > 0.0);
    CHECK(w.w_t[i] < 1.0);
  }
  CHECK_THROWS_AS(tgrn::fusion_weights(mlp, std::vector<double>(7), std::vector<double>(7)), ShapeMismatch);
}

TEST_CASE("fusion MLP and fuse gradients agree with central differences") {
  nn::ParameterSet<double> params;
  nn::Rng rng(7);
  tgrn::FusionMlp<double> mlp(params, "mlp", 6, 12, tgrn::FusionActivation::sigmoid, rng);
  std::mt19937_64 data(8);
  std::normal_distribution<double> n(0, 1);
  auto tensor = [&](nn::Shape s) {
    nn::Tensor<double> t(s);
    for (auto& v : t.values()) v = n(data);
    return t;
  };
  auto ze = Var<double>::parameter(tensor({2, 6, 16, 16}));
  auto zt = Var<double>::parameter(tensor({2, 6, 16, 16}));
  auto probe = Var<double>::constant(tensor({2, 6, 16, 16}));
  auto loss = [&] {
    auto [we, wt] = mlp(nn::global_avg_pool(ze), nn::global_avg_pool(zt));
    return nn::mean(nn::mul(tgrn::fuse(ze, zt, we, wt), probe));
  };
  nn::backward(loss());
  std::vector<nn::Tensor<double>*> inputs{&ze.mutable_value(), &zt.mutable_value()};
  std::vector<const nn::Tensor<double>*> grads{&ze.grad(), &zt.grad()};
  for (const auto& [name, p] : params.entries()) {
    auto var = p;
    inputs.push_back(&var.mutable_value());
    grads.push_back(&p.grad());
  }
  const auto r = oracle::grad_check(inputs, grads, [&] {
    nn::NoGradGuard g;
    return loss().item();
  });
  CHECK(r.max_rel < 1e-4);
}

TEST_CASE("restoration net starts close to I_F and keeps its shape") {
  tgrn::TgrnNet net({}, 9);
  std::mt19937_64 rng(10);
  const auto f = oracle::random_image(rng, 16, 16, 3);
  const auto g = oracle::random_image(rng, 16, 16, 3);
  const auto out = tgrn::tgrn_forward(net, f, g);
  CHECK(out.same_shape(f));
  CHECK(out.range() == ValueRange::signed_unit);
  CHECK(evalkit::psnr(f, convert_range(out, ValueRange::unit)) > 20.0);
}

TEST_CASE("restoration net validates inputs") {
  tgrn::TgrnNet net({}, 9);
  std::mt19937_64 rng(11);
  const auto f = oracle::random_image(rng, 16, 16, 3);
  CHECK_THROWS(tgrn::tgrn_forward(net, f, oracle::random_image(rng, 16, 12, 3)));
  CHECK_THROWS(tgrn::tgrn_forward(net, oracle::random_image(rng, 14, 14, 3),
                                  oracle::random_image(rng, 14, 14, 3)));
  tgrn::TgrnConfig bad;
  bad.channels = {16, 32};
  CHECK_THROWS_AS(tgrn::TgrnNet(bad, 1), InvalidArgument);
}

TEST_CASE("encoder feature maps halve per level") {
  tgrn::TgrnNet net({}, 12);
  std::mt19937_64 rng(13);
  const auto maps = tgrn::encode(net, oracle::random_image(rng, 32, 32, 3));
  REQUIRE(maps.size() == 3);
  CHECK(maps[0].height() == 32);
  CHECK(maps[1].height() == 16);
  CHECK(maps[2].width() == 8);
  CHECK(maps[2].depth() == 64);
}

TEST_CASE("texture features match encoder shapes") {
  tgrn::TgrnNet net({}, 14);
  std::mt19937_64 rng(15);
  const std::vector<std::pair<int, int>> targets{{32, 32}, {16, 16}, {8, 8}};
  const auto maps = tgrn::tam_extract(net.tam(), net.config(), oracle::random_image(rng, 32, 32, 3), targets);
  REQUIRE(maps.size() == 3);
  for (int i = 0; i < 3; ++i) {
    CHECK(maps[i].height() == targets[i].first);
    CHECK(maps[i].depth() == net.config().channels[i]);
  }
}
