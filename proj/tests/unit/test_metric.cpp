#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <random>

#include "facefuse/error.hpp"
#include "facefuse/faces.hpp"
#include "facefuse/metric.hpp"
#include "facefuse/nn/ops.hpp"
#include "facefuse/tensor_convert.hpp"
#include "oracles.hpp"

using namespace facefuse;
namespace fs = std::filesystem;

TEST_CASE("anchor positive equals the pixelwise blend") {
  std::mt19937_64 rng(1);
  for (int trial = 0; trial < 20; ++trial) {
    const int h = 8 + trial % 5, w = 9 + trial % 3, c = trial % 2 ? 3 : 1;
    const auto f = oracle::random_image(rng, h, w, c);
    const auto g = oracle::random_image(rng, h, w, c);
    const auto m = oracle::random_mask(rng, h, w);
    const auto got = metric::build_anchor_positive(f, g, m);
    const auto want = oracle::anchor_positive(f, g, m);
    for (std::size_t i = 0; i < want.size(); ++i) CHECK(std::abs(got.pixels()[i] - want[i]) <= 1e-12);
  }
}

TEST_CASE("anchor positive degenerate masks select one input exactly") {
  std::mt19937_64 rng(2);
  const auto f = oracle::random_image(rng, 8, 8, 3);
  const auto g = oracle::random_image(rng, 8, 8, 3);
  CHECK(metric::build_anchor_positive(f, g, SemanticMask::constant(8, 8, true)) == f);
  CHECK(metric::build_anchor_positive(f, g, SemanticMask::constant(8, 8, false)) == g);
  CHECK_THROWS_AS(metric::build_anchor_positive(f, g, SemanticMask::constant(8, 7, true)), ShapeMismatch);
}

TEST_CASE("network anchor positive broadcasts the mask over channels") {
  std::mt19937_64 rng(3);
  std::vector<Image> fs_, gs;
  std::vector<SemanticMask> ms;
  for (int i = 0; i < 2; ++i) {
    fs_.push_back(oracle::random_image(rng, 8, 8, 3, ValueRange::signed_unit));
    gs.push_back(oracle::random_image(rng, 8, 8, 3, ValueRange::signed_unit));
    ms.push_back(oracle::random_mask(rng, 8, 8));
  }
  auto f = nn::Var<float>::constant(images_to_tensor<float>(fs_, ValueRange::signed_unit));
  auto g = nn::Var<float>::constant(images_to_tensor<float>(gs, ValueRange::signed_unit));
  const auto out = metric::build_anchor_positive(f, g, masks_to_tensor<float>(ms));
  for (int n = 0; n < 2; ++n) {
    for (int c = 0; c < 3; ++c) {
      for (int y = 0; y < 8; ++y) {
        for (int x = 0; x < 8; ++x) {
          const float want = ms[n].at(y, x) ? f.value().at(n, c, y, x) : g.value().at(n, c, y, x);
          CHECK(out.value().at(n, c, y, x) == want);
        }
      }
    }
  }
}

TEST_CASE("cosine triplet loss closed forms") {
  auto e = [](std::vector<double> v) { return metric::Embedding::normalize(std::move(v)); };
  const auto a = e({1, 0, 0});
  CHECK(std::abs(metric::cosine_triplet_loss(a, a, a) - std::log(2.0)) < 1e-12);
  CHECK(std::abs(metric::cosine_triplet_loss(a, a, e({-1, 0, 0})) - std::log1p(std::exp(-2.0))) < 1e-12);
  CHECK(std::abs(metric::cosine_triplet_loss(e({0, 1, 0}), a, a) - std::log1p(std::exp(1.0))) < 1e-12);
  CHECK(std::abs(metric::cosine_triplet_loss(a, a, a, 2.5) - 2.5 * std::log(2.0)) < 1e-12);
}

TEST_CASE("cosine triplet loss matches the log-ratio oracle") {
  std::mt19937_64 rng(4);
  for (int trial = 0; trial < 30; ++trial) {
    const int d = 2 + trial % 9;
    const auto p = oracle::random_unit_vector(rng, d), a = oracle::random_unit_vector(rng, d),
               n = oracle::random_unit_vector(rng, d);
    const double got = metric::cosine_triplet_loss(metric::Embedding::normalize(p),
                                                   metric::Embedding::normalize(a),
                                                   metric::Embedding::normalize(n), 0.7);
    CHECK(oracle::rel_err(got, oracle::triplet(p, a, n, 0.7)) < 1e-12);
  }
}

TEST_CASE("cosine triplet loss rejects unnormalized embeddings") {
  metric::Embedding raw{{2.0, 0.0}, false};
  const auto u = metric::Embedding::normalize({1.0, 0.0});
  CHECK_THROWS_AS(metric::cosine_triplet_loss(raw, u, u), InvalidArgument);
}

TEST_CASE("triplet gradient agrees with central differences") {
  std::mt19937_64 rng(5);
  std::normal_distribution<double> n(0, 1);
  auto tensor = [&] {
    nn::Tensor<double> t({3, 8, 1, 1});
    for (auto& v : t.values()) v = n(rng);
    return t;
  };
  auto p = nn::Var<double>::parameter(tensor());
  auto a = nn::Var<double>::parameter(tensor());
  auto q = nn::Var<double>::parameter(tensor());
  auto loss = [&] {
    return nn::cosine_triplet_loss(nn::l2_normalize(p), nn::l2_normalize(a), nn::l2_normalize(q), 1.3);
  };
  nn::backward(loss());
  const auto r = oracle::grad_check({&p.mutable_value(), &a.mutable_value(), &q.mutable_value()},
                                    {&p.grad(), &a.grad(), &q.grad()}, [&] {
                                      nn::NoGradGuard g;
                                      return loss().item();
                                    });
  CHECK(r.max_rel < 1e-4);
}

TEST_CASE("fixed embedder is deterministic, normalized and frozen") {
  const metric::EmbedderSpec spec{metric::EmbedderKind::fixed_random_conv, 9, 32, 3};
  std::mt19937_64 rng(6);
  const auto img = oracle::random_image(rng, 32, 32, 3);
  const auto e1 = metric::embed(spec, img);
  const auto e2 = metric::embed(spec, img);
  CHECK(e1.vector == e2.vector);
  CHECK(e1.vector.size() == 32);
  CHECK(e1.norm() == doctest::Approx(1.0).epsilon(1e-6));
  metric::RandomConvEmbedder emb(spec);
  for (const auto& [name, v] : emb.parameters().entries()) CHECK_FALSE(v.requires_grad());
  CHECK_THROWS_AS(metric::make_embedder({metric::EmbedderKind::external, 0, 8, 3}), Unavailable);
}

TEST_CASE("landmark files round trip and skip comments") {
  const fs::path dir = fs::temp_directory_path() / "facefuse_metric_test";
  fs::create_directories(dir);
  const metric::Landmarks pts{{10.5, 12}, {20, 12.25}, {15, 18}, {11, 24}, {19, 24}};
  metric::save_landmarks(pts, dir / "a.txt");
  CHECK(metric::load_landmarks(dir / "a.txt") == pts);
  {
    std::ofstream f(dir / "b.txt");
    f << "# five points\n1 2\n\n3 4\n5 6\n7 8\n9 10\n";
  }
  CHECK(metric::load_landmarks(dir / "b.txt").size() == 5);
  {
    std::ofstream f(dir / "c.txt");
    f << "1 2\n3\n";
  }
  CHECK_THROWS(metric::load_landmarks(dir / "c.txt"));
  fs::remove_all(dir);
}

TEST_CASE("landmark mask covers eyes, nose and mouth but not the corners") {
  const auto lm = faces::canonical_landmarks(64, 64);
  const auto m = metric::mask_from_landmarks(64, 64, lm);
  for (const auto& p : lm) CHECK(m.at(static_cast<int>(p.y), static_cast<int>(p.x)) == 1);
  CHECK(m.at(0, 0) == 0);
  CHECK(m.at(63, 63) == 0);
  CHECK(m.coverage() > 0.05);
  CHECK(m.coverage() < 0.6);
}
