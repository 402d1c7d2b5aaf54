#include "facefuse/train.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numbers>
#include <numeric>
#include <random>

#include <json.hpp>

#include "facefuse/checkpoint.hpp"
#include "facefuse/degrade.hpp"
#include "facefuse/error.hpp"
#include "facefuse/image_io.hpp"
#include "facefuse/tensor_convert.hpp"

namespace facefuse::train {

namespace fs = std::filesystem;
using nn::Tensor;
using nn::Var;

DeformationField random_smooth_field(int height, int width, double max_magnitude,
                                     std::uint64_t seed) {
  if (!(max_magnitude >= 0.0)) throw InvalidArgument("random_smooth_field: magnitude must be >= 0");
  if (max_magnitude == 0.0) return DeformationField::zeros(height, width);
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> freq(-1.5, 1.5);
  std::uniform_real_distribution<double> phase(0.0, 2.0 * std::numbers::pi);
  std::uniform_real_distribution<double> amp(0.3, 1.0);
  struct Wave {
    double fx, fy, phase, amp;
  };
  constexpr int kWaves = 4;
  Wave waves[2][kWaves];
  for (auto& comp : waves) {
    for (auto& w : comp) w = {freq(rng), freq(rng), phase(rng), amp(rng)};
  }
  std::vector<double> v(static_cast<std::size_t>(height) * width * 2);
  double peak = 0.0;
  for (int y = 0; y < height; ++y) {
    for (int x = 0; x < width; ++x) {
      double d[2] = {0.0, 0.0};
      for (int k = 0; k < 2; ++k) {
        for (const auto& w : waves[k]) {
          d[k] += w.amp * std::sin(2.0 * std::numbers::pi * (w.fx * x / width + w.fy * y / height) +
                                   w.phase);
        }
      }
      const std::size_t i = (static_cast<std::size_t>(y) * width + x) * 2;
      v[i] = d[0];
      v[i + 1] = d[1];
      peak = std::max(peak, std::hypot(d[0], d[1]));
    }
  }
  const double s = peak > 0.0 ? max_magnitude / peak : 0.0;
  for (double& e : v) e *= s;
  DeformationField f(height, width, std::move(v));
  // Guard the bound against rounding in the rescale.
  const double m = f.max_magnitude();
  return m > max_magnitude ? f.scaled(max_magnitude / m) : f;
}

DeformationField invert_field(const DeformationField& field, int iterations) {
  if (iterations < 1) throw InvalidArgument("invert_field: iterations must be >= 1");
  const std::span<const DeformationField> one(&field, 1);
  auto psi = Var<double>::constant(fields_to_tensor<double>(one));
  Tensor<double> u = psi.value();
  for (double& e : u.values()) e = -e;
  for (int it = 0; it < iterations; ++it) {
    auto sampled = nn::warp(psi, Var<double>::constant(u)).value();
    for (std::size_t i = 0; i < u.size(); ++i) u[i] = -sampled[i];
  }
  return tensor_to_field(u, 0);
}

PriorPair synth_prior_pair(const Image& i_hq, double warp_magnitude, double texture_strength,
                           std::uint64_t seed, double fidelity_blur) {
  if (i_hq.range() != ValueRange::unit) {
    throw InvalidArgument("synth_prior_pair: I_HQ must be in unit range");
  }
  if (!(warp_magnitude >= 0.0)) throw InvalidArgument("synth_prior_pair: warp_magnitude must be >= 0");
  if (!(texture_strength >= 0.0)) {
    throw InvalidArgument("synth_prior_pair: texture_strength must be >= 0");
  }
  const int h = i_hq.height();
  const int w = i_hq.width();
  std::mt19937_64 seeds(seed);
  const std::uint64_t field_seed = seeds();
  const std::uint64_t texture_seed = seeds();

  DeformationField gt = random_smooth_field(h, w, warp_magnitude, field_seed);
  Image i_g = warp_magnitude == 0.0 ? i_hq : dam::warp(i_hq, invert_field(gt));
  if (texture_strength > 0.0) {
    constexpr double kSpread = 0.12;
    std::mt19937_64 rng(texture_seed);
    std::normal_distribution<double> normal(0.0, kSpread);
    std::vector<double> n(static_cast<std::size_t>(h) * w);
    for (double& v : n) v = 0.5 + normal(rng);
    const Image noise = Image::clipped(h, w, 1, ValueRange::unit, std::move(n));
    const Image low = degrade::gaussian_blur(noise, 1.0);
    std::vector<double> px(i_g.pixels().begin(), i_g.pixels().end());
    const int c = i_g.channels();
    for (int y = 0; y < h; ++y) {
      for (int x = 0; x < w; ++x) {
        const double t = texture_strength * (noise.at(y, x) - low.at(y, x)) / kSpread;
        for (int k = 0; k < c; ++k) px[(static_cast<std::size_t>(y) * w + x) * c + k] += t;
      }
    }
    i_g = Image::clipped(h, w, c, ValueRange::unit, std::move(px));
  }
  Image i_f = degrade::gaussian_blur(i_hq, fidelity_blur);
  return PriorPair{"", std::move(i_f), std::move(i_g), std::move(gt), i_hq, std::nullopt};
}

DeformationField identity_drift_field(int height, int width, const metric::Landmarks& landmarks,
                                      double magnitude, std::uint64_t seed) {
  if (landmarks.size() < 2) throw InvalidArgument("identity_drift_field: need at least two landmarks");
  if (!(magnitude >= 0.0)) throw InvalidArgument("identity_drift_field: magnitude must be >= 0");
  const double iod = std::hypot(landmarks[1].x - landmarks[0].x, landmarks[1].y - landmarks[0].y);
  const double s = std::max(1.0, 0.22 * iod);
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> angle(0.0, 2.0 * std::numbers::pi);
  std::vector<std::pair<double, double>> dirs;
  for (std::size_t k = 0; k < landmarks.size(); ++k) {
    const double a = angle(rng);
    dirs.emplace_back(magnitude * std::cos(a), magnitude * std::sin(a));
  }
  std::vector<double> v(static_cast<std::size_t>(height) * width * 2, 0.0);
  for (int y = 0; y < height; ++y) {
    for (int x = 0; x < width; ++x) {
      double dx = 0.0;
      double dy = 0.0;
      for (std::size_t k = 0; k < landmarks.size(); ++k) {
        const double ex = x - landmarks[k].x;
        const double ey = y - landmarks[k].y;
        const double g = std::exp(-(ex * ex + ey * ey) / (2.0 * s * s));
        dx += g * dirs[k].first;
        dy += g * dirs[k].second;
      }
      const std::size_t i = (static_cast<std::size_t>(y) * width + x) * 2;
      v[i] = dx;
      v[i + 1] = dy;
    }
  }
  return DeformationField(height, width, std::move(v));
}

PriorPair synth_drifted_pair(const Image& i_hq, const metric::Landmarks& landmarks, double drift,
                             double warp_magnitude, double texture_strength, std::uint64_t seed,
                             double fidelity_blur) {
  const auto field =
      identity_drift_field(i_hq.height(), i_hq.width(), landmarks, drift, seed ^ 0x5bd1e995ULL);
  PriorPair pair = synth_prior_pair(dam::warp(i_hq, field), warp_magnitude, texture_strength, seed,
                                    fidelity_blur);
  pair.i_f = degrade::gaussian_blur(i_hq, fidelity_blur);
  pair.i_hq = i_hq;
  return pair;
}

double l1_loss(const Image& i_hq, const Image& i_out) {
  if (!i_hq.same_shape(i_out)) throw ShapeMismatch("l1_loss: image shapes differ");
  if (i_hq.range() != i_out.range()) throw InvalidArgument("l1_loss: value ranges differ");
  const auto a = i_hq.pixels();
  const auto b = i_out.pixels();
  double sum = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) sum += std::abs(a[i] - b[i]);
  return sum / static_cast<double>(a.size());
}

namespace {

double softplus(double x) { return std::max(x, 0.0) + std::log1p(std::exp(-std::abs(x))); }

double mean_softplus(std::span<const double> v, double sign) {
  if (v.empty()) throw InvalidArgument("adversarial_losses: empty discriminator output");
  double s = 0.0;
  for (double x : v) s += softplus(sign * x);
  return s / static_cast<double>(v.size());
}

Var<float> signed_tensor(const Image& img) {
  return Var<float>::constant(image_to_tensor<float>(img, ValueRange::signed_unit));
}

}  // namespace

Discriminator::Discriminator(int image_channels, int width, std::uint64_t seed) {
  nn::Rng rng(seed);
  c1_ = nn::Conv2d<float>(params_, "d1", image_channels, width, 3, 2, rng);
  c2_ = nn::Conv2d<float>(params_, "d2", width, 2 * width, 3, 2, rng);
  c3_ = nn::Conv2d<float>(params_, "d3", 2 * width, 4 * width, 3, 2, rng);
  c4_ = nn::Conv2d<float>(params_, "d4", 4 * width, 4 * width, 3, 2, rng);
  head_ = nn::Linear<float>(params_, "head", 4 * width, 1, rng);
}

Var<float> Discriminator::operator()(const Var<float>& images) const {
  const float slope = nn::kLeakySlope;
  Var<float> x = nn::leaky_relu(c1_(images), slope);
  x = nn::leaky_relu(c2_(x), slope);
  x = nn::leaky_relu(c3_(x), slope);
  x = nn::leaky_relu(c4_(x), slope);
  return head_(nn::global_avg_pool(x));
}

AdversarialLosses adversarial_losses(std::span<const double> d_out, std::span<const double> d_hq) {
  const double fake = mean_softplus(d_out, 1.0);
  return {-fake, fake + mean_softplus(d_hq, -1.0)};
}

AdversarialLosses adversarial_losses(const Discriminator& disc, const Image& i_out,
                                     const Image& i_hq) {
  if (!i_out.same_shape(i_hq)) throw ShapeMismatch("adversarial_losses: image shapes differ");
  nn::NoGradGuard no_grad;
  const auto out = disc(signed_tensor(i_out)).value().cast<double>();
  const auto hq = disc(signed_tensor(i_hq)).value().cast<double>();
  return adversarial_losses(out.values(), hq.values());
}

double identity_loss(const metric::FeatureExtractor& eta, const Image& i_hq, const Image& i_out) {
  if (!i_hq.same_shape(i_out)) throw ShapeMismatch("identity_loss: image shapes differ");
  const auto a = metric::embed(eta, i_hq).vector;
  const auto b = metric::embed(eta, i_out).vector;
  double sum = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) sum += std::abs(a[i] - b[i]);
  return sum / static_cast<double>(a.size());
}

double total_tgrn_loss(const LossComponents& c, const LossWeights& w) {
  for (double v : {c.l1, c.adv, c.id, c.triplet}) {
    if (!std::isfinite(v)) throw InvalidArgument("total_tgrn_loss: non-finite component");
  }
  return w.lambda_l1 * c.l1 + w.lambda_adv * c.adv + w.lambda_id * c.id + c.triplet;
}

MemoryPairProvider::MemoryPairProvider(std::vector<PriorPair> pairs) : pairs_(std::move(pairs)) {}

DirectoryPairProvider::DirectoryPairProvider(fs::path root) : root_(std::move(root)) {
  const fs::path hq = root_ / "hq";
  if (!fs::is_directory(hq)) throw FileNotFound("pair directory has no hq/ folder: " + root_.string());
  std::vector<std::string> missing;
  for (const auto& entry : fs::directory_iterator(hq)) {
    if (!entry.is_regular_file() || entry.path().extension() != ".png") continue;
    const std::string name = entry.path().stem().string();
    for (const char* sub : {"i_f", "i_g"}) {
      if (!fs::exists(root_ / sub / (name + ".png"))) missing.push_back(std::string(sub) + "/" + name);
    }
    names_.push_back(name);
  }
  if (!missing.empty()) {
    std::string list;
    for (const auto& m : missing) list += (list.empty() ? "" : ", ") + m;
    throw CorruptData("pair directory is missing images: " + list);
  }
  if (names_.empty()) throw CorruptData("pair directory holds no pairs: " + root_.string());
  std::sort(names_.begin(), names_.end());
}

PriorPair DirectoryPairProvider::get(std::size_t index) const {
  const std::string& name = names_.at(index);
  const std::string png = name + ".png";
  PriorPair p{name,
              load_image(root_ / "i_f" / png, ValueRange::unit),
              load_image(root_ / "i_g" / png, ValueRange::unit),
              std::nullopt,
              load_image(root_ / "hq" / png, ValueRange::unit),
              std::nullopt};
  if (const auto f = root_ / "field" / (name + ".dfld"); fs::exists(f)) p.gt_field = load_field(f);
  if (const auto m = root_ / "mask" / png; fs::exists(m)) {
    p.mask = load_mask(m);
  } else if (const auto l = root_ / "landmarks" / (name + ".txt"); fs::exists(l)) {
    p.mask = metric::mask_from_landmarks(p.i_hq.height(), p.i_hq.width(), metric::load_landmarks(l));
  }
  return p;
}

void write_pair(const PriorPair& pair, const fs::path& root) {
  if (pair.name.empty()) throw InvalidArgument("write_pair: pair has no name");
  for (const char* sub : {"hq", "i_f", "i_g"}) fs::create_directories(root / sub);
  const std::string png = pair.name + ".png";
  save_image(convert_range(pair.i_hq, ValueRange::unit), root / "hq" / png);
  save_image(convert_range(pair.i_f, ValueRange::unit), root / "i_f" / png);
  save_image(convert_range(pair.i_g, ValueRange::unit), root / "i_g" / png);
  if (pair.gt_field) {
    fs::create_directories(root / "field");
    save_field(*pair.gt_field, root / "field" / (pair.name + ".dfld"));
  }
  if (pair.mask) {
    fs::create_directories(root / "mask");
    save_mask(*pair.mask, root / "mask" / png);
  }
}

BatchSampler::BatchSampler(std::size_t size, int batch_size, std::uint64_t seed)
    : size_(size), batch_(batch_size), seed_(seed), order_(size) {
  if (size == 0) throw InvalidArgument("BatchSampler: no samples");
  if (batch_size < 1) throw InvalidArgument("BatchSampler: batch size must be >= 1");
  cursor_ = size_;
}

std::vector<std::size_t> BatchSampler::next() {
  std::vector<std::size_t> out;
  out.reserve(batch_);
  while (static_cast<int>(out.size()) < batch_) {
    if (cursor_ == size_) {
      std::iota(order_.begin(), order_.end(), std::size_t{0});
      std::mt19937_64 rng(seed_ + 0x9e3779b97f4a7c15ULL * (epoch_ + 1));
      std::shuffle(order_.begin(), order_.end(), rng);
      cursor_ = 0;
      ++epoch_;
    }
    out.push_back(order_[cursor_++]);
  }
  return out;
}

Batch make_batch(std::span<const PriorPair> pairs) {
  if (pairs.empty()) throw InvalidArgument("make_batch: no pairs");
  std::vector<Image> f, g, hq;
  std::vector<SemanticMask> masks;
  bool all_masks = true;
  for (const auto& p : pairs) {
    if (!p.i_f.same_shape(p.i_g) || !p.i_f.same_shape(p.i_hq)) {
      throw ShapeMismatch("pair '" + p.name + "': I_F, I_G and I_HQ shapes differ");
    }
    f.push_back(p.i_f);
    g.push_back(p.i_g);
    hq.push_back(p.i_hq);
    if (p.mask) {
      masks.push_back(*p.mask);
    } else {
      all_masks = false;
    }
  }
  Batch b;
  b.i_f = images_to_tensor<float>(f, ValueRange::signed_unit);
  b.i_g = images_to_tensor<float>(g, ValueRange::signed_unit);
  b.i_hq = images_to_tensor<float>(hq, ValueRange::signed_unit);
  if (all_masks) b.masks = masks_to_tensor<float>(masks);
  return b;
}

std::string log_line(const LogRecord& r, Stage stage) {
  nlohmann::ordered_json j;
  j["step"] = r.step;
  if (stage == Stage::dam) {
    j["sim"] = r.sim;
    j["smooth"] = r.smooth;
    j["total"] = r.total;
  } else {
    j["l1"] = r.l1;
    j["adv"] = r.adv;
    j["id"] = r.id;
    j["triplet"] = r.triplet;
    j["total"] = r.total;
    j["disc"] = r.disc;
  }
  return j.dump();
}

namespace {

void require_finite(const LogRecord& r, Stage stage) {
  for (double v : {r.sim, r.smooth, r.l1, r.adv, r.id, r.triplet, r.disc, r.total}) {
    if (!std::isfinite(v)) {
      throw TrainingDiverged("loss became non-finite at step " + std::to_string(r.step) + ": " +
                             log_line(r, stage));
    }
  }
}

}  // namespace

DamTrainer::DamTrainer(const TrainConfig& config)
    : config_(config),
      net_(config.dam_net, config.seed),
      adam_(net_.parameters(), nn::AdamOptions{config.learning_rate}) {}

LogRecord DamTrainer::step(const Batch& batch) {
  auto f = Var<float>::constant(batch.i_f);
  auto g = Var<float>::constant(batch.i_g);
  auto field = net_.forward(f, g);
  auto sim = nn::local_ncc_loss(f, nn::warp(g, field), config_.ncc_window, dam::kNccEpsilon);
  auto smooth = nn::smoothness_loss(field);
  auto total = nn::add(sim, nn::scale(smooth, static_cast<float>(config_.loss_weights.lambda_phi)));
  LogRecord r;
  r.step = steps_;
  r.sim = sim.item();
  r.smooth = smooth.item();
  r.total = total.item();
  require_finite(r, Stage::dam);
  nn::backward(total);
  adam_.step();
  ++steps_;
  return r;
}

TgrnTrainer::TgrnTrainer(const TrainConfig& config, TrainOptions options)
    : config_(config),
      options_(std::move(options)),
      net_(config.tgrn_net, config.seed + 1),
      disc_(config.tgrn_net.image_channels, config.disc_channels, config.seed + 2),
      triplet_embedder_(metric::make_embedder(config.triplet_embedder)),
      identity_embedder_(metric::make_embedder(config.identity_embedder)),
      adam_(net_.parameters(), nn::AdamOptions{config.learning_rate}),
      disc_adam_(disc_.parameters(), nn::AdamOptions{config.learning_rate}) {
  if (config_.loss_weights.lambda_perceptual > 0.0 && !options_.perceptual) {
    throw Unavailable("lambda_perceptual > 0 but no perceptual loss was supplied");
  }
}

LogRecord TgrnTrainer::step(const Batch& batch, const Tensor<float>& i_warp) {
  const auto& w = config_.loss_weights;
  auto f = Var<float>::constant(batch.i_f);
  auto warped = Var<float>::constant(i_warp);
  auto hq = Var<float>::constant(batch.i_hq);
  auto out = net_.forward(f, warped);

  LogRecord r;
  r.step = steps_;
  const bool train_disc = w.lambda_adv > 0.0 && config_.disc_steps > 0;
  if (train_disc) {
    auto fake = out.detach();
    for (int k = 0; k < config_.disc_steps; ++k) {
      auto d_loss = nn::add(nn::softplus_mean(disc_(fake), 1.0f), nn::softplus_mean(disc_(hq), -1.0f));
      r.disc = d_loss.item();
      nn::backward(d_loss);
      disc_adam_.step();
    }
  }

  disc_.parameters().set_trainable(false);
  struct Restore {
    Discriminator& d;
    ~Restore() { d.parameters().set_trainable(true); }
  } restore_disc{disc_};

  auto l1 = nn::mean_abs_diff(out, hq);
  r.l1 = l1.item();
  Var<float> total = nn::scale(l1, static_cast<float>(w.lambda_l1));

  auto adv = nn::scale(nn::softplus_mean(disc_(out), 1.0f), -1.0f);
  r.adv = adv.item();
  if (w.lambda_adv > 0.0) total = nn::add(total, nn::scale(adv, static_cast<float>(w.lambda_adv)));

  Var<float> id_target;
  {
    nn::NoGradGuard no_grad;
    id_target = (*identity_embedder_)(hq);
  }
  auto id = nn::mean_abs_diff((*identity_embedder_)(out), id_target);
  r.id = id.item();
  if (w.lambda_id > 0.0) total = nn::add(total, nn::scale(id, static_cast<float>(w.lambda_id)));

  if (w.lambda_triplet > 0.0) {
    // Variant D: positive I_AP, negative I_F. Variant C: positive I_HQ,
    // negative I_warp.
    Var<float> positive_img, negative_img;
    if (config_.positive == PositiveSource::anchor_positive) {
      if (batch.masks.empty()) {
        throw InvalidArgument("anchor-positive triplet needs a semantic mask for every pair");
      }
      positive_img = metric::build_anchor_positive(f, warped, batch.masks);
      negative_img = f;
    } else {
      positive_img = hq;
      negative_img = warped;
    }
    Var<float> pos, neg;
    {
      nn::NoGradGuard no_grad;
      pos = (*triplet_embedder_)(positive_img);
      neg = (*triplet_embedder_)(negative_img);
    }
    auto anchor = (*triplet_embedder_)(out);
    auto triplet = nn::cosine_triplet_loss(pos, anchor, neg,
                                           static_cast<float>(w.lambda_triplet));
    r.triplet = triplet.item();
    total = nn::add(total, triplet);
  }
  if (w.lambda_perceptual > 0.0) {
    total = nn::add(total, nn::scale(options_.perceptual(out, hq),
                                     static_cast<float>(w.lambda_perceptual)));
  }
  r.total = total.item();
  require_finite(r, Stage::tgrn);
  nn::backward(total);
  adam_.step();
  ++steps_;
  return r;
}

namespace {

std::vector<PriorPair> load_all(const PairProvider& data) {
  if (data.size() == 0) throw InvalidArgument("pair provider is empty");
  std::vector<PriorPair> pairs;
  pairs.reserve(data.size());
  for (std::size_t i = 0; i < data.size(); ++i) pairs.push_back(data.get(i));
  return pairs;
}

template <typename T>
std::vector<T> gather(const std::vector<T>& all, const std::vector<std::size_t>& idx) {
  std::vector<T> out;
  out.reserve(idx.size());
  for (auto i : idx) out.push_back(all[i]);
  return out;
}

class LogSink {
 public:
  LogSink(const TrainOptions& options, Stage stage) : options_(options), stage_(stage) {
    if (options.log) {
      file_.open(*options.log);
      if (!file_) throw IoError("cannot write training log: " + options.log->string());
    }
  }

  void write(const LogRecord& r, std::vector<LogRecord>& history) {
    history.push_back(r);
    if (file_.is_open()) file_ << log_line(r, stage_) << '\n' << std::flush;
    if (options_.on_log) options_.on_log(r);
  }

 private:
  const TrainOptions& options_;
  Stage stage_;
  std::ofstream file_;
};

bool should_log(long step, long last, int every) { return step % every == 0 || step == last; }

Tensor<float> stack_warps(const std::vector<Tensor<float>>& warps,
                          const std::vector<std::size_t>& idx) {
  const auto& s0 = warps[idx[0]].shape();
  Tensor<float> out(nn::Shape{static_cast<int>(idx.size()), s0.c, s0.h, s0.w});
  const std::size_t per = s0.size();
  for (std::size_t k = 0; k < idx.size(); ++k) {
    std::copy_n(warps[idx[k]].data(), per, out.data() + k * per);
  }
  return out;
}

}  // namespace

DamResult train_stage1(const TrainConfig& config, const PairProvider& data,
                       const TrainOptions& options) {
  config.validate();
  if (config.stage != Stage::dam) throw InvalidArgument("train_stage1 needs stage = dam");
  const auto pairs = load_all(data);
  DamTrainer trainer(config);
  BatchSampler sampler(pairs.size(), config.batch_size, config.seed);
  LogSink sink(options, Stage::dam);
  std::vector<LogRecord> history;
  const long iterations = config.effective_iterations();
  for (long it = 0; it < iterations; ++it) {
    const auto batch = make_batch(gather(pairs, sampler.next()));
    const LogRecord r = trainer.step(batch);
    if (should_log(it, iterations - 1, config.log_every)) sink.write(r, history);
  }
  if (options.checkpoint) save_dam(trainer.net(), config, *options.checkpoint);
  return DamResult{std::move(trainer.net()), std::move(history)};
}

TgrnResult train_stage2(const TrainConfig& config, const dam::RegistrationNet& dam_net,
                        const PairProvider& data, const TrainOptions& options) {
  config.validate();
  if (config.stage != Stage::tgrn) throw InvalidArgument("train_stage2 needs stage = tgrn");
  if (config.variant == Variant::A) {
    throw InvalidArgument("variant A has no restoration stage; use the aligned prior directly");
  }
  const auto pairs = load_all(data);
  if (config.loss_weights.lambda_triplet > 0.0 &&
      config.positive == PositiveSource::anchor_positive) {
    for (const auto& p : pairs) {
      if (!p.mask) throw InvalidArgument("pair '" + p.name + "' has no semantic mask");
    }
  }
  std::vector<Tensor<float>> warps;
  warps.reserve(pairs.size());
  for (const auto& p : pairs) {
    warps.push_back(align_batch(dam_net, make_batch(std::span<const PriorPair>(&p, 1))));
  }
  TgrnTrainer trainer(config, options);
  BatchSampler sampler(pairs.size(), config.batch_size, config.seed);
  LogSink sink(options, Stage::tgrn);
  std::vector<LogRecord> history;
  const long iterations = config.effective_iterations();
  for (long it = 0; it < iterations; ++it) {
    const auto idx = sampler.next();
    const auto batch = make_batch(gather(pairs, idx));
    const LogRecord r = trainer.step(batch, stack_warps(warps, idx));
    if (should_log(it, iterations - 1, config.log_every)) sink.write(r, history);
  }
  if (options.checkpoint) save_tgrn(trainer.net(), config, *options.checkpoint);
  return TgrnResult{std::move(trainer.net()), std::move(history)};
}

Tensor<float> align_batch(const dam::RegistrationNet& dam_net, const Batch& batch) {
  nn::NoGradGuard no_grad;
  auto f = Var<float>::constant(batch.i_f);
  auto g = Var<float>::constant(batch.i_g);
  return nn::warp(g, dam_net.forward(f, g)).value();
}

Alignment align(const dam::RegistrationNet& dam_net, const Image& i_f, const Image& i_g) {
  DeformationField field = dam::predict_field(dam_net, i_f, i_g);
  Image warped = dam::warp(i_g, field);
  return {std::move(field), std::move(warped)};
}

Image restore(const dam::RegistrationNet& dam_net, const tgrn::TgrnNet& tgrn_net, const Image& i_f,
              const Image& i_g) {
  if (!i_f.same_shape(i_g)) throw ShapeMismatch("restore: I_F and I_G shapes differ");
  nn::NoGradGuard no_grad;
  auto f = signed_tensor(i_f);
  auto g = signed_tensor(i_g);
  auto warped = nn::warp(g, dam_net.forward(f, g));
  auto out = tgrn_net.forward(f, warped);
  return convert_range(tensor_to_image(out.value(), 0, ValueRange::signed_unit), ValueRange::unit);
}

double dam_validation_loss(const dam::RegistrationNet& dam_net, const PairProvider& data,
                           const TrainConfig& config) {
  if (data.size() == 0) throw InvalidArgument("dam_validation_loss: no pairs");
  double sum = 0.0;
  for (std::size_t i = 0; i < data.size(); ++i) {
    const auto p = data.get(i);
    const auto field = dam::predict_field(dam_net, p.i_f, p.i_g);
    sum += dam::dam_loss(p.i_f, p.i_g, field, {config.loss_weights.lambda_phi}, config.ncc_window);
  }
  return sum / static_cast<double>(data.size());
}

double mean_endpoint_error(const dam::RegistrationNet& dam_net, const PairProvider& data) {
  double sum = 0.0;
  int count = 0;
  for (std::size_t i = 0; i < data.size(); ++i) {
    const auto p = data.get(i);
    if (!p.gt_field) continue;
    sum += endpoint_error(dam::predict_field(dam_net, p.i_f, p.i_g), *p.gt_field);
    ++count;
  }
  if (count == 0) throw InvalidArgument("mean_endpoint_error: no pair carries a ground-truth field");
  return sum / count;
}

void save_dam(const dam::RegistrationNet& net, const TrainConfig& config, const fs::path& path) {
  checkpoint::save(checkpoint::capture("dam", config_to_json(config), net.parameters()), path);
}

dam::RegistrationNet load_dam(const fs::path& path) {
  const auto ckpt = checkpoint::load(path);
  if (ckpt.kind != "dam") {
    throw UnsupportedFormat("expected a dam checkpoint, found '" + ckpt.kind + "'");
  }
  const auto config = config_from_json(ckpt.config_json);
  dam::RegistrationNet net(config.dam_net, config.seed);
  checkpoint::restore(ckpt, net.parameters());
  return net;
}

void save_tgrn(const tgrn::TgrnNet& net, const TrainConfig& config, const fs::path& path) {
  checkpoint::save(checkpoint::capture("tgrn", config_to_json(config), net.parameters()), path);
}

tgrn::TgrnNet load_tgrn(const fs::path& path) {
  const auto ckpt = checkpoint::load(path);
  if (ckpt.kind != "tgrn") {
    throw UnsupportedFormat("expected a tgrn checkpoint, found '" + ckpt.kind + "'");
  }
  const auto config = config_from_json(ckpt.config_json);
  tgrn::TgrnNet net(config.tgrn_net, config.seed + 1);
  checkpoint::restore(ckpt, net.parameters());
  return net;
}

}  // namespace facefuse::train
