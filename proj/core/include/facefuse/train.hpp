#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "facefuse/config.hpp"
#include "facefuse/dam.hpp"
#include "facefuse/image.hpp"
#include "facefuse/metric.hpp"
#include "facefuse/tgrn.hpp"

// Two-stage training: stage 1 fits the registration net, stage 2 fits the
// restoration net against a frozen registration net.
namespace facefuse::train {

struct PriorPair {
  std::string name;
  Image i_f;
  Image i_g;
  std::optional<DeformationField> gt_field;
  Image i_hq;
  std::optional<SemanticMask> mask;
};

// Sum of low-frequency sinusoids rescaled so the largest displacement equals max_magnitude.
DeformationField random_smooth_field(int height, int width, double max_magnitude,
                                     std::uint64_t seed);
// Fixed-point inverse u with u(q) = -field(q + u(q)).
DeformationField invert_field(const DeformationField& field, int iterations = 40);

// gt_field is the field that aligns i_g back onto i_hq; i_g is i_hq warped by
// its inverse plus band-passed texture; i_f is i_hq under a mild blur.
PriorPair synth_prior_pair(const Image& i_hq, double warp_magnitude, double texture_strength,
                           std::uint64_t seed, double fidelity_blur = 1.0);

// Local displacement bumps centred on each landmark (Gaussian falloff, width a
// fraction of the interocular distance) with random directions of length
// `magnitude`; models a prior that reshapes identity-critical components.
DeformationField identity_drift_field(int height, int width, const metric::Landmarks& landmarks,
                                      double magnitude, std::uint64_t seed);
// synth_prior_pair whose I_G is rendered from a drifted copy of I_HQ, while
// I_F and I_HQ keep the true geometry.
PriorPair synth_drifted_pair(const Image& i_hq, const metric::Landmarks& landmarks, double drift,
                             double warp_magnitude, double texture_strength, std::uint64_t seed,
                             double fidelity_blur = 1.0);

double l1_loss(const Image& i_hq, const Image& i_out);

struct AdversarialLosses {
  double gen = 0.0;
  double disc = 0.0;
};

// Four stride-2 convolutions, global average pooling and a scalar head.
class Discriminator {
 public:
  Discriminator(int image_channels, int width, std::uint64_t seed);
  nn::Var<float> operator()(const nn::Var<float>& images) const;
  nn::ParameterSet<float>& parameters() { return params_; }
  const nn::ParameterSet<float>& parameters() const { return params_; }

 private:
  nn::ParameterSet<float> params_;
  nn::Conv2d<float> c1_, c2_, c3_, c4_;
  nn::Linear<float> head_;
};

// gen = -mean softplus(D(out)); disc = mean softplus(D(out)) + mean softplus(-D(hq)).
AdversarialLosses adversarial_losses(std::span<const double> d_out, std::span<const double> d_hq);
AdversarialLosses adversarial_losses(const Discriminator& disc, const Image& i_out,
                                     const Image& i_hq);

// Mean absolute difference between identity embeddings.
double identity_loss(const metric::FeatureExtractor& eta, const Image& i_hq, const Image& i_out);

struct LossComponents {
  double l1 = 0.0;
  double adv = 0.0;
  double id = 0.0;
  double triplet = 0.0;
};

// lambda_l1 L1 + lambda_adv L_adv + lambda_id L_id + L_triplet; the triplet term
// already carries its own weight.
double total_tgrn_loss(const LossComponents& c, const LossWeights& w);

class PairProvider {
 public:
  virtual ~PairProvider() = default;
  virtual std::size_t size() const = 0;
  virtual PriorPair get(std::size_t index) const = 0;
};

class MemoryPairProvider final : public PairProvider {
 public:
  explicit MemoryPairProvider(std::vector<PriorPair> pairs);
  std::size_t size() const override { return pairs_.size(); }
  PriorPair get(std::size_t index) const override { return pairs_.at(index); }

 private:
  std::vector<PriorPair> pairs_;
};

// Layout: root/{hq,i_f,i_g}/<name>.png required; root/field/<name>.dfld,
// root/mask/<name>.png and root/landmarks/<name>.txt optional.
class DirectoryPairProvider final : public PairProvider {
 public:
  explicit DirectoryPairProvider(std::filesystem::path root);
  std::size_t size() const override { return names_.size(); }
  PriorPair get(std::size_t index) const override;
  const std::vector<std::string>& names() const { return names_; }

 private:
  std::filesystem::path root_;
  std::vector<std::string> names_;
};

void write_pair(const PriorPair& pair, const std::filesystem::path& root);

// Epoch-wise shuffled index stream; the order depends only on (size, batch, seed).
class BatchSampler {
 public:
  BatchSampler(std::size_t size, int batch_size, std::uint64_t seed);
  std::vector<std::size_t> next();

 private:
  std::size_t size_;
  int batch_;
  std::uint64_t seed_;
  std::vector<std::size_t> order_;
  std::size_t cursor_ = 0;
  std::uint64_t epoch_ = 0;
};

// Signed-range (N, C, H, W) tensors stacked from a list of pairs.
struct Batch {
  nn::Tensor<float> i_f;
  nn::Tensor<float> i_g;
  nn::Tensor<float> i_hq;
  nn::Tensor<float> masks;  // (N, 1, H, W); empty when any pair lacks a mask
};

Batch make_batch(std::span<const PriorPair> pairs);

struct LogRecord {
  long step = 0;
  double sim = 0.0;
  double smooth = 0.0;
  double l1 = 0.0;
  double adv = 0.0;
  double id = 0.0;
  double triplet = 0.0;
  double disc = 0.0;
  double total = 0.0;
};

// One JSON object per line: stage 1 {step, sim, smooth, total}, stage 2
// {step, l1, adv, id, triplet, total, disc}.
std::string log_line(const LogRecord& record, Stage stage);

struct TrainOptions {
  std::optional<std::filesystem::path> checkpoint;
  std::optional<std::filesystem::path> log;
  std::function<void(const LogRecord&)> on_log;
  // Called with (I_out, I_HQ) when lambda_perceptual > 0.
  std::function<nn::Var<float>(const nn::Var<float>&, const nn::Var<float>&)> perceptual;
};

class DamTrainer {
 public:
  explicit DamTrainer(const TrainConfig& config);
  LogRecord step(const Batch& batch);
  dam::RegistrationNet& net() { return net_; }
  long steps() const { return steps_; }

 private:
  TrainConfig config_;
  dam::RegistrationNet net_;
  nn::Adam<float> adam_;
  long steps_ = 0;
};

class TgrnTrainer {
 public:
  explicit TgrnTrainer(const TrainConfig& config, TrainOptions options = {});
  // i_warp is the aligned prior for the batch (already warped by the frozen DAM).
  LogRecord step(const Batch& batch, const nn::Tensor<float>& i_warp);
  tgrn::TgrnNet& net() { return net_; }
  long steps() const { return steps_; }

 private:
  TrainConfig config_;
  TrainOptions options_;
  tgrn::TgrnNet net_;
  Discriminator disc_;
  std::unique_ptr<metric::FeatureExtractor> triplet_embedder_;
  std::unique_ptr<metric::FeatureExtractor> identity_embedder_;
  nn::Adam<float> adam_;
  nn::Adam<float> disc_adam_;
  long steps_ = 0;
};

struct DamResult {
  dam::RegistrationNet net;
  std::vector<LogRecord> log;
};

struct TgrnResult {
  tgrn::TgrnNet net;
  std::vector<LogRecord> log;
};

DamResult train_stage1(const TrainConfig& config, const PairProvider& data,
                       const TrainOptions& options = {});
TgrnResult train_stage2(const TrainConfig& config, const dam::RegistrationNet& dam_net,
                        const PairProvider& data, const TrainOptions& options = {});

// Frozen DAM applied to a batch: I_warp = warp(I_G, R(I_F, I_G)).
nn::Tensor<float> align_batch(const dam::RegistrationNet& dam_net, const Batch& batch);

struct Alignment {
  DeformationField field;
  Image warped;
};

Alignment align(const dam::RegistrationNet& dam_net, const Image& i_f, const Image& i_g);
// Inference path: align I_G to I_F, then fuse with the restoration net. Unit range out.
Image restore(const dam::RegistrationNet& dam_net, const tgrn::TgrnNet& tgrn_net, const Image& i_f,
              const Image& i_g);

// Mean L_sim + lambda_phi L_smooth over every pair, evaluated in double precision.
double dam_validation_loss(const dam::RegistrationNet& dam_net, const PairProvider& data,
                           const TrainConfig& config);
// Mean endpoint error against gt_field over the pairs that carry one.
double mean_endpoint_error(const dam::RegistrationNet& dam_net, const PairProvider& data);

void save_dam(const dam::RegistrationNet& net, const TrainConfig& config,
              const std::filesystem::path& path);
dam::RegistrationNet load_dam(const std::filesystem::path& path);
void save_tgrn(const tgrn::TgrnNet& net, const TrainConfig& config,
               const std::filesystem::path& path);
tgrn::TgrnNet load_tgrn(const std::filesystem::path& path);

}  // namespace facefuse::train
