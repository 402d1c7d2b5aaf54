#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <random>

#include "facefuse/degrade.hpp"
#include "facefuse/error.hpp"
#include "facefuse/faces.hpp"
#include "facefuse/image_io.hpp"
#include "oracles.hpp"

using namespace facefuse;
namespace fs = std::filesystem;

TEST_CASE("blur preserves constants and sigma zero is a copy") {
  const auto flat = Image::filled(16, 16, 3, ValueRange::unit, 0.37);
  const auto blurred = degrade::gaussian_blur(flat, 2.3);
  for (double v : blurred.pixels()) CHECK(v == doctest::Approx(0.37).epsilon(1e-12));
  std::mt19937_64 rng(1);
  const auto img = oracle::random_image(rng, 9, 9, 1);
  CHECK(degrade::gaussian_blur(img, 0.0) == img);
  CHECK_THROWS_AS(degrade::gaussian_blur(img, -1.0), InvalidArgument);
}

TEST_CASE("blurred impulse equals the normalized Gaussian taps") {
  std::vector<double> px(21 * 21, 0.0);
  px[10 * 21 + 10] = 1.0;
  const auto out = degrade::gaussian_blur(Image(21, 21, 1, ValueRange::unit, px), 1.0);
  double norm = 0.0;
  for (int i = -3; i <= 3; ++i) norm += std::exp(-i * i / 2.0);
  for (int dy = -3; dy <= 3; ++dy) {
    for (int dx = -3; dx <= 3; ++dx) {
      const double want = std::exp(-dy * dy / 2.0) * std::exp(-dx * dx / 2.0) / (norm * norm);
      CHECK(out.at(10 + dy, 10 + dx) == doctest::Approx(want).epsilon(1e-12));
    }
  }
  CHECK(out.at(10, 14) == 0.0);
}

TEST_CASE("resample sizes and identity factor") {
  const auto big = Image::filled(512, 512, 1, ValueRange::unit, 0.2);
  CHECK(degrade::downsample(big, 2.0).height() == 256);
  CHECK(degrade::downsample(big, 6.0).width() == 85);
  std::mt19937_64 rng(2);
  const auto img = oracle::random_image(rng, 20, 24, 3);
  CHECK(degrade::resample(img, 1.0, degrade::Direction::down) == img);
  CHECK_THROWS(degrade::downsample(img, 0.5));
}

TEST_CASE("noise is deterministic and has std delta/255") {
  std::mt19937_64 rng(3);
  const auto img = oracle::random_image(rng, 16, 16, 3);
  CHECK(degrade::add_gaussian_noise(img, 0.0, 4) == img);
  CHECK(degrade::add_gaussian_noise(img, 10.0, 4) == degrade::add_gaussian_noise(img, 10.0, 4));
  const auto n = degrade::gaussian_noise(400000, 25.0, ValueRange::unit, 5);
  double mean = 0.0, sq = 0.0;
  for (double v : n) mean += v;
  mean /= n.size();
  for (double v : n) sq += (v - mean) * (v - mean);
  const double sd = std::sqrt(sq / (n.size() - 1));
  CHECK(std::abs(sd - 25.0 / 255) / (25.0 / 255) < 0.02);
  CHECK(std::abs(mean) < 1e-3);
  CHECK_THROWS_AS(degrade::add_gaussian_noise(img, -1.0, 4), InvalidArgument);
}

TEST_CASE("jpeg round trip keeps shape and is near lossless at quality 100") {
  std::vector<double> px;
  for (int y = 0; y < 32; ++y) {
    for (int x = 0; x < 32; ++x) {
      for (int c = 0; c < 3; ++c) px.push_back((x + y + 10.0 * c) / 100.0);
    }
  }
  const Image ramp(32, 32, 3, ValueRange::unit, px);
  const auto out = degrade::jpeg_roundtrip(ramp, 100);
  CHECK(out.same_shape(ramp));
  double worst = 0.0;
  for (std::size_t i = 0; i < px.size(); ++i) worst = std::max(worst, std::abs(out.pixels()[i] - px[i]));
  CHECK(worst <= 2.0 / 255 + 1e-12);
}

TEST_CASE("jpeg size does not grow as quality drops") {
  const auto face = faces::synth_face(64, 64, 3).image;
  const auto s90 = encode_jpeg(face, 90).size();
  const auto s60 = encode_jpeg(face, 60).size();
  const auto s30 = encode_jpeg(face, 30).size();
  CHECK(s60 <= s90);
  CHECK(s30 <= s60);
}

TEST_CASE("identity parameters leave the image bit identical") {
  std::mt19937_64 rng(6);
  const auto img = oracle::random_image(rng, 24, 20, 3);
  CHECK(degrade::degrade(img, {0.0, 1.0, 0.0, std::nullopt}, 9) == img);
}

TEST_CASE("degrade is deterministic and preserves spatial size") {
  const auto face = faces::synth_face(64, 64, 4).image;
  for (std::uint64_t seed : {1u, 2u, 3u, 4u}) {
    const auto p = degrade::sample_params(seed);
    const auto a = degrade::degrade(face, p, seed);
    CHECK(a == degrade::degrade(face, p, seed));
    CHECK(a.same_shape(face));
    CHECK(a.range() == ValueRange::unit);
  }
}

TEST_CASE("sampled parameters stay inside the configured ranges") {
  for (std::uint64_t seed = 0; seed < 2000; ++seed) {
    const auto p = degrade::sample_params(seed);
    CHECK(p.sigma >= 1.0);
    CHECK(p.sigma <= 15.0);
    CHECK(p.scale >= 1.0);
    CHECK(p.scale <= 6.0);
    CHECK(p.noise >= 0.0);
    CHECK(p.noise <= 25.0);
    REQUIRE(p.quality.has_value());
    CHECK(*p.quality >= 30);
    CHECK(*p.quality <= 90);
    CHECK(p == degrade::sample_params(seed));
  }
  degrade::DegradationRanges fixed;
  fixed.sigma = {5.0, 5.0};
  CHECK(degrade::sample_params(11, fixed).sigma == 5.0);
}

TEST_CASE("reordering the stages changes the output") {
  const auto face = faces::synth_face(64, 64, 5).image;
  const degrade::DegradationParams p{3.0, 3.0, 10.0, 50};
  const auto canonical = degrade::degrade(face, p, 7);
  CHECK(degrade::degrade_in_order(face, p, 7, degrade::kPipelineOrder) == canonical);
  using S = degrade::Stage;
  const S swapped[] = {S::down, S::blur, S::noise, S::jpeg, S::up};
  const S late_noise[] = {S::blur, S::down, S::jpeg, S::noise, S::up};
  CHECK_FALSE(degrade::degrade_in_order(face, p, 7, swapped) == canonical);
  CHECK_FALSE(degrade::degrade_in_order(face, p, 7, late_noise) == canonical);
}

TEST_CASE("manifest sidecar round trips the sampled parameters") {
  const fs::path dir = fs::temp_directory_path() / "facefuse_degrade_manifest";
  fs::create_directories(dir);
  std::vector<degrade::ManifestEntry> entries{{"hq/a.png", "lq/a.png", degrade::sample_params(1), 1},
                                              {"hq/b.png", "lq/b.png", {2.0, 1.5, 0.0, std::nullopt}, 2}};
  degrade::write_manifest(dir / "m.tsv", dir / "m.json", entries);
  const auto back = degrade::read_sidecar(dir / "m.json");
  REQUIRE(back.size() == 2);
  for (std::size_t i = 0; i < 2; ++i) {
    CHECK(back[i].params == entries[i].params);
    CHECK(back[i].seed == entries[i].seed);
    CHECK(back[i].lq_path == entries[i].lq_path);
  }
  fs::remove_all(dir);
}
