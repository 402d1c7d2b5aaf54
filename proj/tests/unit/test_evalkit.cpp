#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <random>

#include "facefuse/degrade.hpp"
#include "facefuse/error.hpp"
#include "facefuse/evalkit.hpp"
#include "facefuse/faces.hpp"
#include "facefuse/image_io.hpp"
#include "oracles.hpp"

using namespace facefuse;
namespace fs = std::filesystem;

namespace {

fs::path scratch_dir(const char* name) {
  const fs::path dir = fs::temp_directory_path() / name;
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir;
}

}  // namespace

TEST_CASE("psnr reference values") {
  std::mt19937_64 rng(1);
  const auto a = oracle::random_image(rng, 16, 16, 3);
  CHECK(evalkit::psnr(a, a) == 100.0);
  const auto lo = Image::filled(16, 16, 1, ValueRange::unit, 0.2);
  const auto hi = Image::filled(16, 16, 1, ValueRange::unit, 0.3);
  CHECK(evalkit::psnr(lo, hi) == doctest::Approx(20.0).epsilon(1e-12));
  for (int trial = 0; trial < 20; ++trial) {
    const auto x = oracle::random_image(rng, 12, 14, 3), y = oracle::random_image(rng, 12, 14, 3);
    CHECK(oracle::rel_err(evalkit::psnr(x, y), oracle::psnr(x, y)) < 1e-9);
  }
  CHECK_THROWS_AS(evalkit::psnr(a, oracle::random_image(rng, 16, 15, 3)), ShapeMismatch);
}

TEST_CASE("psnr strictly decreases with noise level") {
  const auto face = faces::synth_face(64, 64, 2).image;
  double previous = 1e9;
  for (double delta : {2.0, 5.0, 10.0, 15.0, 25.0}) {
    const double p = evalkit::psnr(face, degrade::add_gaussian_noise(face, delta, 3));
    CHECK(p < previous);
    previous = p;
  }
}

TEST_CASE("ssim matches the centred-moment oracle and is symmetric") {
  std::mt19937_64 rng(4);
  for (int trial = 0; trial < 10; ++trial) {
    const auto x = oracle::random_image(rng, 16 + trial, 18, trial % 2 ? 3 : 1);
    const auto y = oracle::random_image(rng, 16 + trial, 18, trial % 2 ? 3 : 1);
    const double s = evalkit::ssim(x, y);
    CHECK(oracle::rel_err(s, oracle::ssim(x, y)) < 1e-9);
    CHECK(std::abs(s - evalkit::ssim(y, x)) < 1e-12);
    CHECK(s >= -1.0);
    CHECK(s <= 1.0);
  }
}

TEST_CASE("ssim identical is one and inverted checkerboard is low") {
  std::mt19937_64 rng(5);
  const auto a = oracle::random_image(rng, 20, 20, 3);
  CHECK(evalkit::ssim(a, a) == 1.0);
  std::vector<double> c, inv;
  for (int y = 0; y < 16; ++y) {
    for (int x = 0; x < 16; ++x) {
      c.push_back((x + y) % 2);
      inv.push_back(1 - (x + y) % 2);
    }
  }
  CHECK(evalkit::ssim(Image(16, 16, 1, ValueRange::unit, c), Image(16, 16, 1, ValueRange::unit, inv)) < 0.1);
  CHECK_THROWS_AS(evalkit::ssim(Image::filled(10, 16, 1, ValueRange::unit, 0.5),
                                Image::filled(10, 16, 1, ValueRange::unit, 0.5)),
                  InvalidArgument);
}

TEST_CASE("lmd reference values") {
  const metric::Landmarks a{{1, 2}, {3, 4}, {5, 6}, {7, 8}, {9, 10}};
  metric::Landmarks b = a;
  CHECK(evalkit::lmd(a, a) == 0.0);
  for (auto& p : b) {
    p.x += 3;
    p.y += 4;
  }
  CHECK(evalkit::lmd(a, b) == doctest::Approx(5.0).epsilon(1e-15));
  std::mt19937_64 rng(6);
  std::uniform_real_distribution<double> u(0, 64);
  for (int trial = 0; trial < 20; ++trial) {
    metric::Landmarks p(5), q(5);
    for (int i = 0; i < 5; ++i) {
      p[i] = {u(rng), u(rng)};
      q[i] = {u(rng), u(rng)};
    }
    CHECK(oracle::rel_err(evalkit::lmd(p, q), oracle::lmd(p, q)) < 1e-12);
  }
  b.pop_back();
  CHECK_THROWS_AS(evalkit::lmd(a, b), ShapeMismatch);
}

TEST_CASE("evaluate_dir on identical directories") {
  const auto dir = scratch_dir("facefuse_eval_same");
  fs::create_directories(dir / "ref");
  for (int i = 0; i < 3; ++i) save_image(faces::synth_face(32, 32, i).image, dir / "ref" / ("f" + std::to_string(i) + ".png"));
  const auto report = evalkit::evaluate_dir(dir / "ref", dir / "ref");
  CHECK(report.images.size() == 3);
  CHECK(report.aggregates.psnr == 100.0);
  CHECK(report.aggregates.ssim == 1.0);
  fs::remove_all(dir);
}

TEST_CASE("evaluate_dir aggregates equal the mean of the rows and lists unmatched files") {
  const auto dir = scratch_dir("facefuse_eval_rows");
  for (const char* d : {"ref", "test", "lm/ref", "lm/test"}) fs::create_directories(dir / d);
  for (int i = 0; i < 4; ++i) {
    const auto face = faces::synth_face(32, 32, 10 + i);
    const std::string name = "f" + std::to_string(i);
    save_image(face.image, dir / "ref" / (name + ".png"));
    save_image(degrade::add_gaussian_noise(face.image, 5.0 + 5 * i, i), dir / "test" / (name + ".png"));
    metric::save_landmarks(face.landmarks, dir / "lm/ref" / (name + ".txt"));
    auto moved = face.landmarks;
    for (auto& p : moved) p.x += i;
    metric::save_landmarks(moved, dir / "lm/test" / (name + ".txt"));
  }
  evalkit::EvaluateOptions opts;
  opts.landmarks = dir / "lm";
  const auto report = evalkit::evaluate_dir(dir / "ref", dir / "test", opts);
  REQUIRE(report.images.size() == 4);
  double p = 0, s = 0, l = 0;
  for (const auto& row : report.images) {
    p += row.psnr;
    s += row.ssim;
    REQUIRE(row.lmd.has_value());
    l += *row.lmd;
  }
  CHECK(std::abs(report.aggregates.psnr - p / 4) < 1e-9);
  CHECK(std::abs(report.aggregates.ssim - s / 4) < 1e-9);
  CHECK(std::abs(*report.aggregates.lmd - l / 4) < 1e-9);
  CHECK(*report.aggregates.lmd == doctest::Approx(1.5));

  const auto back = evalkit::report_from_json(evalkit::report_json(report));
  CHECK(back.images.size() == 4);
  CHECK(back.aggregates.psnr == doctest::Approx(report.aggregates.psnr));
  CHECK(evalkit::report_table(report).find("mean") != std::string::npos);

  save_image(faces::synth_face(32, 32, 99).image, dir / "test" / "extra.png");
  try {
    evalkit::evaluate_dir(dir / "ref", dir / "test");
    FAIL("expected an error");
  } catch (const CorruptData& e) {
    CHECK(std::string(e.what()).find("extra.png") != std::string::npos);
  }
  fs::remove_all(dir);
}

TEST_CASE("evaluate_dir with no images is an error") {
  const auto dir = scratch_dir("facefuse_eval_empty");
  fs::create_directories(dir / "a");
  fs::create_directories(dir / "b");
  CHECK_THROWS(evalkit::evaluate_dir(dir / "a", dir / "b"));
  fs::remove_all(dir);
}

TEST_CASE("metric hooks feed extra aggregate columns") {
  const auto dir = scratch_dir("facefuse_eval_hooks");
  fs::create_directories(dir / "ref");
  save_image(faces::synth_face(32, 32, 1).image, dir / "ref" / "a.png");
  evalkit::EvaluateOptions opts;
  opts.hooks.push_back({"fid", [](const fs::path&, const fs::path&) { return 12.5; }});
  const auto report = evalkit::evaluate_dir(dir / "ref", dir / "ref", opts);
  REQUIRE(report.aggregates.extra.size() == 1);
  CHECK(report.aggregates.extra[0].first == "fid");
  CHECK(report.aggregates.extra[0].second == 12.5);
  fs::remove_all(dir);
}
