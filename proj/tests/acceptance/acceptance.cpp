// Acceptance suite: one PASS/FAIL line per criterion. Optional arguments select
// a subset of criteria by number, e.g. `acceptance 1 2 8`.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <functional>
#include <optional>
#include <random>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "facefuse/dam.hpp"
#include "facefuse/degrade.hpp"
#include "facefuse/evalkit.hpp"
#include "facefuse/faces.hpp"
#include "facefuse/image_io.hpp"
#include "facefuse/metric.hpp"
#include "facefuse/nn/ops.hpp"
#include "facefuse/tensor_convert.hpp"
#include "facefuse/tgrn.hpp"
#include "facefuse/train.hpp"
#include "oracles.hpp"

using namespace facefuse;
namespace fs = std::filesystem;
using nn::Var;

namespace {

struct Outcome {
  bool pass = false;
  std::string detail;
};

std::string fmt(const char* f, auto... args) {
  char buf[512];
  std::snprintf(buf, sizeof buf, f, args...);
  return buf;
}

double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

fs::path scratch_dir(const char* name) {
  const fs::path dir = fs::temp_directory_path() / name;
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir;
}

nn::Tensor<double> random_tensor(std::mt19937_64& rng, nn::Shape s, double lo, double hi) {
  std::uniform_real_distribution<double> u(lo, hi);
  nn::Tensor<double> t(s);
  for (auto& v : t.values()) v = u(rng);
  return t;
}

// ---------------------------------------------------------------- 1

Outcome equation_oracles() {
  const auto t0 = std::chrono::steady_clock::now();
  constexpr int kTrials = 50;
  std::mt19937_64 rng(1001);
  std::uniform_int_distribution<int> side(9, 16);
  std::uniform_real_distribution<double> u(-2, 2);
  std::vector<std::pair<std::string, double>> errors;
  auto record = [&](const std::string& name, auto&& trial) {
    double e = 0.0;
    for (int t = 0; t < kTrials; ++t) e = std::max(e, trial(t));
    errors.emplace_back(name, e);
  };

  record("ncc", [&](int t) {
    const int h = side(rng), w = side(rng), c = t % 2 ? 3 : 1;
    const int window = 3 + 2 * (t % 4);
    const auto a = oracle::random_image(rng, h, w, c, ValueRange::signed_unit);
    const auto b = oracle::random_image(rng, h, w, c, ValueRange::signed_unit);
    return oracle::rel_err(dam::local_ncc_loss(a, b, window), oracle::local_ncc(a, b, window, dam::kNccEpsilon));
  });
  record("smoothness", [&](int) {
    const auto f = oracle::random_field(rng, side(rng), side(rng), 3.0);
    return oracle::rel_err(dam::smoothness_loss(f), oracle::smoothness(f));
  });
  record("fuse", [&](int t) {
    const int d = 1 + t % 8;
    const auto ze = oracle::random_feature(rng, side(rng), side(rng), d);
    const auto zt = oracle::random_feature(rng, ze.height(), ze.width(), d);
    tgrn::FusionWeights fw;
    for (int c = 0; c < d; ++c) {
      fw.w_e.push_back(u(rng));
      fw.w_t.push_back(u(rng));
    }
    const auto got = tgrn::fuse(ze, zt, fw);
    const auto want = oracle::fuse(ze, zt, fw.w_e, fw.w_t);
    double e = 0.0;
    for (std::size_t i = 0; i < want.size(); ++i) e = std::max(e, oracle::rel_err(got.values()[i], want[i]));
    return e;
  });
  record("triplet", [&](int t) {
    const int d = 2 + t % 30;
    const double lambda = 0.1 + 0.05 * t;
    const auto p = oracle::random_unit_vector(rng, d), a = oracle::random_unit_vector(rng, d),
               n = oracle::random_unit_vector(rng, d);
    const double got = metric::cosine_triplet_loss(metric::Embedding::normalize(p), metric::Embedding::normalize(a),
                                                   metric::Embedding::normalize(n), lambda);
    return oracle::rel_err(got, oracle::triplet(p, a, n, lambda));
  });
  record("l1", [&](int t) {
    const int h = side(rng), w = side(rng), c = t % 2 ? 3 : 1;
    const auto a = oracle::random_image(rng, h, w, c), b = oracle::random_image(rng, h, w, c);
    return oracle::rel_err(train::l1_loss(a, b), oracle::l1(a, b));
  });
  record("psnr", [&](int t) {
    const int h = side(rng), w = side(rng), c = t % 2 ? 3 : 1;
    const auto a = oracle::random_image(rng, h, w, c), b = oracle::random_image(rng, h, w, c);
    return oracle::rel_err(evalkit::psnr(a, b), oracle::psnr(a, b));
  });
  record("ssim", [&](int t) {
    const int h = 11 + t % 8, w = 11 + (t / 8) % 8, c = t % 2 ? 3 : 1;
    const auto a = oracle::random_image(rng, h, w, c), b = oracle::random_image(rng, h, w, c);
    return oracle::rel_err(evalkit::ssim(a, b), oracle::ssim(a, b));
  });
  record("lmd", [&](int) {
    std::uniform_real_distribution<double> pos(0, 64);
    metric::Landmarks p(5), q(5);
    for (int i = 0; i < 5; ++i) {
      p[i] = {pos(rng), pos(rng)};
      q[i] = {pos(rng), pos(rng)};
    }
    return oracle::rel_err(evalkit::lmd(p, q), oracle::lmd(p, q));
  });

  const double elapsed = seconds_since(t0);
  bool pass = elapsed < 60.0;
  std::string detail = fmt("%d trials each;", kTrials);
  for (const auto& [name, e] : errors) {
    pass = pass && e < 1e-9;
    detail += fmt(" %s %.1e", name.c_str(), e);
  }
  return {pass, detail};
}

// ---------------------------------------------------------------- 2

Outcome closed_form_triplet() {
  const auto e = [](std::vector<double> v) { return metric::Embedding::normalize(std::move(v)); };
  const auto x = e({1, 0, 0});
  const double equal = metric::cosine_triplet_loss(x, x, x);
  const double best = metric::cosine_triplet_loss(x, x, e({-1, 0, 0}));
  const double worst_case = metric::cosine_triplet_loss(e({0, 1, 0}), x, x);
  const double d1 = std::abs(equal - std::log(2.0));
  const double d2 = std::abs(best - std::log1p(std::exp(-2.0)));
  const double d3 = std::abs(worst_case - std::log1p(std::exp(1.0)));
  return {std::max({d1, d2, d3}) <= 1e-9,
          fmt("equal %.12f (err %.1e), (1,-1) %.12f (err %.1e), (0,1) %.12f (err %.1e)", equal, d1, best, d2,
              worst_case, d3)};
}

// ---------------------------------------------------------------- 3

double check_gradient(std::vector<Var<double>*> vars, const std::function<Var<double>()>& loss) {
  nn::backward(loss());
  std::vector<nn::Tensor<double>*> inputs;
  std::vector<const nn::Tensor<double>*> grads;
  for (auto* v : vars) {
    inputs.push_back(&v->mutable_value());
    grads.push_back(&v->grad());
  }
  return oracle::grad_check(inputs, grads, [&] {
           nn::NoGradGuard g;
           return loss().item();
         }).max_rel;
}

Outcome gradient_checks() {
  const auto t0 = std::chrono::steady_clock::now();
  std::mt19937_64 rng(3003);
  std::vector<std::pair<std::string, double>> errors;

  {
    auto a = Var<double>::parameter(random_tensor(rng, {1, 3, 16, 16}, -1, 1));
    auto b = Var<double>::parameter(random_tensor(rng, {1, 3, 16, 16}, -1, 1));
    errors.emplace_back("ncc", check_gradient({&a, &b}, [&] { return nn::local_ncc_loss(a, b, 9); }));
  }
  {
    auto f = Var<double>::parameter(random_tensor(rng, {1, 2, 16, 16}, -3, 3));
    errors.emplace_back("smoothness", check_gradient({&f}, [&] { return nn::smoothness_loss(f); }));
  }
  {
    auto img = Var<double>::parameter(random_tensor(rng, {1, 3, 16, 16}, -1, 1));
    // Whole offsets plus fractions in [0.1, 0.9] keep each sample off the
    // bilinear kinks and inside the unclamped interior.
    std::uniform_int_distribution<int> whole(-2, 1);
    std::uniform_real_distribution<double> frac(0.1, 0.9);
    nn::Tensor<double> fv({1, 2, 16, 16});
    for (int c = 0; c < 2; ++c) {
      for (int y = 0; y < 16; ++y) {
        for (int x = 0; x < 16; ++x) {
          const int base = c == 0 ? x : y;
          const int d = std::clamp(whole(rng), -base, 14 - base);
          fv.at(0, c, y, x) = d + frac(rng);
        }
      }
    }
    auto field = Var<double>::parameter(fv);
    auto probe = Var<double>::constant(random_tensor(rng, {1, 3, 16, 16}, -1, 1));
    errors.emplace_back("warp", check_gradient({&img, &field},
                                               [&] { return nn::mean(nn::mul(nn::warp(img, field), probe)); }));
  }
  {
    nn::ParameterSet<double> params;
    nn::Rng init(7);
    tgrn::FusionMlp<double> mlp(params, "mlp", 4, 8, tgrn::FusionActivation::sigmoid, init);
    auto ze = Var<double>::parameter(random_tensor(rng, {1, 4, 16, 16}, -1, 1));
    auto zt = Var<double>::parameter(random_tensor(rng, {1, 4, 16, 16}, -1, 1));
    auto probe = Var<double>::constant(random_tensor(rng, {1, 4, 16, 16}, -1, 1));
    std::vector<Var<double>> weights;
    for (const auto& [name, p] : params.entries()) weights.push_back(p);
    std::vector<Var<double>*> vars{&ze, &zt};
    for (auto& w : weights) vars.push_back(&w);
    errors.emplace_back("fusion_mlp", check_gradient(vars, [&] {
                          auto [we, wt] = mlp(nn::global_avg_pool(ze), nn::global_avg_pool(zt));
                          return nn::mean(nn::mul(tgrn::fuse(ze, zt, we, wt), probe));
                        }));
  }
  {
    auto p = Var<double>::parameter(random_tensor(rng, {2, 1, 16, 16}, -1, 1));
    auto a = Var<double>::parameter(random_tensor(rng, {2, 1, 16, 16}, -1, 1));
    auto n = Var<double>::parameter(random_tensor(rng, {2, 1, 16, 16}, -1, 1));
    errors.emplace_back("triplet", check_gradient({&p, &a, &n}, [&] {
                          return nn::cosine_triplet_loss(nn::l2_normalize(p), nn::l2_normalize(a),
                                                         nn::l2_normalize(n), 1.0);
                        }));
  }

  const double elapsed = seconds_since(t0);
  bool pass = elapsed < 120.0;
  std::string detail = "max relative error:";
  for (const auto& [name, e] : errors) {
    pass = pass && e < 1e-4;
    detail += fmt(" %s %.1e", name.c_str(), e);
  }
  return {pass, detail};
}

// ---------------------------------------------------------------- 4

struct DamBench {
  std::vector<train::PriorPair> pairs;
  std::optional<dam::RegistrationNet> net;
  double seconds = 0.0;
};

std::vector<train::PriorPair> dam_pairs(int count, std::uint64_t seed, const train::TrainConfig& config) {
  const auto faces = faces::synth_faces(count, 64, 64, seed);
  std::vector<train::PriorPair> pairs;
  for (int i = 0; i < count; ++i) {
    auto p = train::synth_prior_pair(faces[i].image, config.warp_magnitude, config.texture_strength,
                                     seed * 100 + i, config.fidelity_blur);
    p.name = fmt("pair_%02d", i);
    pairs.push_back(std::move(p));
  }
  return pairs;
}

// Mean NCC similarity term alone, evaluated in the signed range the trainer uses.
double mean_sim(const dam::RegistrationNet& net, const std::vector<train::PriorPair>& pairs, int window) {
  double s = 0.0;
  for (const auto& p : pairs) {
    const auto field = dam::predict_field(net, p.i_f, p.i_g);
    s += dam::local_ncc_loss(convert_range(p.i_f, ValueRange::signed_unit),
                             convert_range(dam::warp(p.i_g, field), ValueRange::signed_unit), window);
  }
  return s / pairs.size();
}

DamBench& dam_bench() {
  static DamBench bench = [] {
    DamBench b;
    train::TrainConfig config;
    config.stage = train::Stage::dam;
    b.pairs = dam_pairs(20, 11, config);
    const auto t0 = std::chrono::steady_clock::now();
    b.net = train::train_stage1(config, train::MemoryPairProvider(b.pairs)).net;
    b.seconds = seconds_since(t0);
    return b;
  }();
  return bench;
}

Outcome dam_recovery() {
  train::TrainConfig config;
  config.stage = train::Stage::dam;
  const dam::RegistrationNet initial(config.dam_net, config.seed);
  auto& bench = dam_bench();
  const train::MemoryPairProvider data(bench.pairs);
  const auto t0 = std::chrono::steady_clock::now();
  const double epe = train::mean_endpoint_error(*bench.net, data);
  const double epe_zero = [&] {
    double s = 0.0;
    for (const auto& p : bench.pairs) s += endpoint_error(DeformationField::zeros(64, 64), *p.gt_field);
    return s / bench.pairs.size();
  }();
  const double sim0 = mean_sim(initial, bench.pairs, config.ncc_window);
  const double sim1 = mean_sim(*bench.net, bench.pairs, config.ncc_window);
  const double improvement = (sim0 - sim1) / std::abs(sim0);
  const double held_out = train::mean_endpoint_error(*bench.net, train::MemoryPairProvider(dam_pairs(8, 12, config)));
  const double elapsed = bench.seconds + seconds_since(t0);
  return {epe < 0.5 && improvement > 0.5 && elapsed < 900.0,
          fmt("%d iterations; EPE %.3f px (zero field %.3f, held-out %.3f); L_sim %.3f -> %.3f, improvement %.1f%%",
              config.effective_iterations(), epe, epe_zero, held_out, sim0, sim1, 100 * improvement)};
}

// ---------------------------------------------------------------- 5

Outcome tgrn_overfit() {
  const auto t0 = std::chrono::steady_clock::now();
  const auto face = faces::synth_face(64, 64, 5);
  train::TrainConfig config;
  config.stage = train::Stage::tgrn;
  config.loss_weights = {1.0, 0.0, 0.0, 0.0, 1.0, 0.0};
  config.disc_steps = 0;
  auto pair = train::synth_prior_pair(face.image, config.warp_magnitude, config.texture_strength, 9);
  pair.mask = metric::mask_from_landmarks(64, 64, face.landmarks);
  const auto batch = train::make_batch(std::span<const train::PriorPair>(&pair, 1));
  const auto warped = image_to_tensor<float>(dam::warp(pair.i_g, *pair.gt_field), ValueRange::signed_unit);
  train::TgrnTrainer trainer(config);
  std::vector<double> totals;
  double last_l1 = 0.0;
  for (int step = 0; step < 500; ++step) {
    const auto r = trainer.step(batch, warped);
    totals.push_back(r.total);
    last_l1 = r.l1;
  }
  std::vector<double> windows;
  for (std::size_t w = 0; w < 10; ++w) {
    double s = 0.0;
    for (std::size_t i = 50 * w; i < 50 * (w + 1); ++i) s += totals[i];
    windows.push_back(s / 50);
  }
  bool monotone = true;
  for (std::size_t w = 1; w < windows.size(); ++w) monotone = monotone && windows[w] < windows[w - 1];
  const double elapsed = seconds_since(t0);
  return {last_l1 < 0.02 && monotone && elapsed < 300.0,
          fmt("final L1 %.4f; 50-step window means %.4f -> %.4f, %s", last_l1, windows.front(), windows.back(),
              monotone ? "strictly decreasing" : "NOT monotone")};
}

// ---------------------------------------------------------------- 6

std::vector<train::PriorPair> drifted_pairs(int count, std::uint64_t seed, double drift,
                                            const train::TrainConfig& config) {
  const auto faces = faces::synth_faces(count, 64, 64, seed);
  std::vector<train::PriorPair> pairs;
  for (int i = 0; i < count; ++i) {
    auto p = train::synth_drifted_pair(faces[i].image, faces[i].landmarks, drift, config.warp_magnitude,
                                       config.texture_strength, seed * 100 + i, config.fidelity_blur);
    p.mask = metric::mask_from_landmarks(64, 64, faces[i].landmarks);
    p.name = fmt("pair_%02d", i);
    pairs.push_back(std::move(p));
  }
  return pairs;
}

struct Scores {
  double psnr = 0.0;
  double l1 = 0.0;
};

Outcome ablation_ladder() {
  constexpr double kDrift = 2.0;
  constexpr int kIterations = 600;
  const auto t0 = std::chrono::steady_clock::now();
  auto& bench = dam_bench();
  const auto& dam_net = *bench.net;
  train::TrainConfig base;
  base.stage = train::Stage::tgrn;
  base.iterations = kIterations;
  const auto train_set = drifted_pairs(20, 21, kDrift, base);
  const auto test_set = drifted_pairs(8, 22, kDrift, base);

  double epe_zero = 0.0, epe_dam = 0.0;
  Scores a, fidelity;
  for (const auto& p : test_set) {
    const auto al = train::align(dam_net, p.i_f, p.i_g);
    epe_zero += endpoint_error(DeformationField::zeros(64, 64), *p.gt_field) / test_set.size();
    epe_dam += endpoint_error(al.field, *p.gt_field) / test_set.size();
    a.psnr += evalkit::psnr(p.i_hq, al.warped) / test_set.size();
    a.l1 += train::l1_loss(p.i_hq, al.warped) / test_set.size();
    fidelity.psnr += evalkit::psnr(p.i_hq, p.i_f) / test_set.size();
    fidelity.l1 += train::l1_loss(p.i_hq, p.i_f) / test_set.size();
  }

  std::vector<std::pair<char, Scores>> variants;
  for (char v : {'B', 'C', 'D'}) {
    auto config = base;
    config.apply_variant(train::parse_variant(std::string(1, v)));
    const auto net = train::train_stage2(config, dam_net, train::MemoryPairProvider(train_set)).net;
    Scores s;
    for (const auto& p : test_set) {
      const auto out = train::restore(dam_net, net, p.i_f, p.i_g);
      s.psnr += evalkit::psnr(p.i_hq, out) / test_set.size();
      s.l1 += train::l1_loss(p.i_hq, out) / test_set.size();
    }
    variants.emplace_back(v, s);
  }
  const Scores& b = variants[0].second;
  const Scores& d = variants[2].second;
  const double elapsed = seconds_since(t0);
  std::string detail = fmt("EPE zero %.3f -> DAM %.3f; I_F psnr %.2f l1 %.4f; A psnr %.2f l1 %.4f", epe_zero, epe_dam,
                           fidelity.psnr, fidelity.l1, a.psnr, a.l1);
  for (const auto& [v, s] : variants) detail += fmt("; %c psnr %.2f l1 %.4f", v, s.psnr, s.l1);
  return {epe_dam < epe_zero && a.l1 > d.l1 && d.psnr >= b.psnr && elapsed < 1800.0, detail};
}

// ---------------------------------------------------------------- 7

int shell(const std::string& command) { return std::system((command + " > /dev/null 2>&1").c_str()); }

std::string quote(const fs::path& p) { return "'" + p.string() + "'"; }

std::string text(const Bytes& bytes) { return {bytes.begin(), bytes.end()}; }

Outcome degradation_determinism() {
  const auto dir = scratch_dir("facefuse_acceptance_degrade");
  fs::create_directories(dir / "hq");
  const auto faces = faces::synth_faces(4, 64, 64, 70);
  for (std::size_t i = 0; i < faces.size(); ++i) save_image(faces[i].image, dir / "hq" / fmt("face_%zu.png", i));
  const std::string cli = FACEFUSE_CLI_PATH;
  bool reproducible = true;
  for (const char* out : {"a", "b"}) {
    reproducible = reproducible && shell(cli + " degrade --in " + quote(dir / "hq") + " --out " + out +
                                         " --seed 5 --out-dir " + quote(dir)) == 0;
  }
  for (const auto& e : fs::directory_iterator(dir / "a")) {
    if (e.path().extension() != ".png") continue;
    reproducible = reproducible && read_file(e.path()) == read_file(dir / "b" / e.path().filename());
  }

  constexpr int kSeeds = 100000;
  int out_of_range = 0;
  for (std::uint64_t seed = 0; seed < kSeeds; ++seed) {
    const auto p = degrade::sample_params(seed);
    const bool ok = p.sigma >= 1 && p.sigma <= 15 && p.scale >= 1 && p.scale <= 6 && p.noise >= 0 &&
                    p.noise <= 25 && p.quality && *p.quality >= 30 && *p.quality <= 90;
    out_of_range += !ok;
  }

  std::mt19937_64 rng(7007);
  bool identity = true;
  for (int t = 0; t < 20; ++t) {
    const auto img = oracle::random_image(rng, 16 + t, 20, t % 2 ? 3 : 1);
    identity = identity && degrade::degrade(img, {0.0, 1.0, 0.0, std::nullopt}, t) == img;
  }
  fs::remove_all(dir);
  return {reproducible && out_of_range == 0 && identity,
          fmt("CLI byte-reproducible: %s; %d/%d sampled parameter sets out of range; identity bit-exact: %s",
              reproducible ? "yes" : "no", out_of_range, kSeeds, identity ? "yes" : "no")};
}

// ---------------------------------------------------------------- 8

Outcome anchor_positive_exactness() {
  std::mt19937_64 rng(8008);
  double err = 0.0;
  for (int t = 0; t < 50; ++t) {
    const int h = 8 + t % 9, w = 8 + (t / 9) % 9, c = t % 2 ? 3 : 1;
    const auto f = oracle::random_image(rng, h, w, c), g = oracle::random_image(rng, h, w, c);
    const auto m = oracle::random_mask(rng, h, w);
    const auto got = metric::build_anchor_positive(f, g, m);
    const auto want = oracle::anchor_positive(f, g, m);
    for (std::size_t i = 0; i < want.size(); ++i) err = std::max(err, std::abs(got.pixels()[i] - want[i]));
  }
  const auto f = oracle::random_image(rng, 12, 12, 3), g = oracle::random_image(rng, 12, 12, 3);
  const bool ones = metric::build_anchor_positive(f, g, SemanticMask::constant(12, 12, true)) == f;
  const bool zeros = metric::build_anchor_positive(f, g, SemanticMask::constant(12, 12, false)) == g;
  return {err <= 1e-12 && ones && zeros, fmt("max abs error %.1e over 50 inputs; M=1 exact: %s; M=0 exact: %s", err,
                                             ones ? "yes" : "no", zeros ? "yes" : "no")};
}

// ---------------------------------------------------------------- 9

Outcome end_to_end() {
  const auto t0 = std::chrono::steady_clock::now();
  const auto dir = scratch_dir("facefuse_acceptance_e2e");
  fs::create_directories(dir / "hq");
  fs::create_directories(dir / "landmarks");
  const auto faces = faces::synth_faces(8, 64, 64, 90);
  for (std::size_t i = 0; i < faces.size(); ++i) {
    const auto name = fmt("face_%zu", i);
    save_image(faces[i].image, dir / "hq" / (name + ".png"));
    metric::save_landmarks(faces[i].landmarks, dir / "landmarks" / (name + ".txt"));
  }
  const std::string cli = std::string(FACEFUSE_CLI_PATH) + " ";
  const std::string at = " --out-dir " + quote(dir);
  const std::vector<std::pair<std::string, std::string>> steps{
      {"degrade", "degrade --in " + quote(dir / "hq") + " --out lq --seed 3"},
      {"synth-pairs", "synth-pairs --in " + quote(dir / "hq") + " --lq " + quote(dir / "lq") + " --landmarks " +
                          quote(dir / "landmarks") + " --out pairs"},
      {"train-dam", "train-dam --pairs " + quote(dir / "pairs") + " --set iterations=200"},
      {"train-tgrn", "train-tgrn --pairs " + quote(dir / "pairs") + " --dam " + quote(dir / "dam.ckpt") +
                         " --set iterations=100"},
      {"restore", "restore --pairs " + quote(dir / "pairs") + " --dam " + quote(dir / "dam.ckpt") + " --tgrn " +
                      quote(dir / "tgrn.ckpt") + " --out restored"},
      {"evaluate", "evaluate --ref " + quote(dir / "hq") + " --test " + quote(dir / "restored") + " --out report.json"},
  };
  for (const auto& [name, args] : steps) {
    const int rc = shell(cli + args + at);
    if (rc != 0) return {false, fmt("%s exited with status %d", name.c_str(), rc)};
  }
  std::string detail;
  bool pass = false;
  try {
    const auto report = evalkit::report_from_json(text(read_file(dir / "report.json")));
    const bool finite = std::isfinite(report.aggregates.psnr) && std::isfinite(report.aggregates.ssim);
    pass = report.images.size() == 8 && finite;
    detail = fmt("%zu images, mean PSNR %.2f dB, mean SSIM %.3f", report.images.size(), report.aggregates.psnr,
                 report.aggregates.ssim);
  } catch (const std::exception& e) {
    detail = std::string("report.json is malformed: ") + e.what();
  }
  const double elapsed = seconds_since(t0);
  pass = pass && elapsed < 1800.0;
  return {pass, detail};
}

}  // namespace

int main(int argc, char** argv) {
  const std::vector<std::pair<const char*, Outcome (*)()>> criteria{
      {"equation oracles", equation_oracles},
      {"closed-form triplet values", closed_form_triplet},
      {"gradient checks", gradient_checks},
      {"DAM recovery", dam_recovery},
      {"TGRN overfit", tgrn_overfit},
      {"ablation ladder", ablation_ladder},
      {"degradation determinism and bounds", degradation_determinism},
      {"anchor-positive exactness", anchor_positive_exactness},
      {"end-to-end smoke", end_to_end},
  };
  std::set<int> selected;
  for (int i = 1; i < argc; ++i) selected.insert(std::atoi(argv[i]));
  int failures = 0;
  for (std::size_t i = 0; i < criteria.size(); ++i) {
    const int id = static_cast<int>(i) + 1;
    if (!selected.empty() && !selected.contains(id)) continue;
    const auto t0 = std::chrono::steady_clock::now();
    Outcome o;
    try {
      o = criteria[i].second();
    } catch (const std::exception& e) {
      o = {false, std::string("threw: ") + e.what()};
    }
    failures += !o.pass;
    std::printf("[%s] %d %s (%.1f s): %s\n", o.pass ? "PASS" : "FAIL", id, criteria[i].first, seconds_since(t0),
                o.detail.c_str());
    std::fflush(stdout);
  }
  return failures == 0 ? 0 : 1;
}
