#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <string_view>

#include "facefuse/dam.hpp"
#include "facefuse/degrade.hpp"
#include "facefuse/metric.hpp"
#include "facefuse/tgrn.hpp"

namespace facefuse::train {

enum class Stage { dam, tgrn };

// Table 3 ladder. A: alignment only (I_warp is the output). B: TGRN with L1,
// adversarial and identity losses. C: adds the triplet with I_HQ as positive.
// D: full model with the I_AP positive.
enum class Variant { A, B, C, D };
enum class PositiveSource { anchor_positive, ground_truth };

struct LossWeights {
  double lambda_l1 = 0.1;
  double lambda_adv = 0.1;
  double lambda_id = 10.0;
  double lambda_triplet = 1.0;
  double lambda_phi = 1.0;
  // Optional perceptual hook; zero leaves it out of the objective entirely.
  double lambda_perceptual = 0.0;
  friend bool operator==(const LossWeights&, const LossWeights&) = default;
};

struct TrainConfig {
  static constexpr int kVersion = 1;

  Stage stage = Stage::dam;
  double learning_rate = 5e-4;
  int batch_size = 4;
  // Unset means the per-stage desk default (2000 for dam, 5000 for tgrn).
  std::optional<int> iterations;
  LossWeights loss_weights;
  std::uint64_t seed = 0;

  int image_size = 64;
  int ncc_window = dam::kDefaultNccWindow;
  int log_every = 10;

  Variant variant = Variant::D;
  PositiveSource positive = PositiveSource::anchor_positive;
  // Discriminator steps per generator step; 0 disables the critic update.
  int disc_steps = 1;
  int disc_channels = 16;

  dam::RegistrationNetConfig dam_net;
  tgrn::TgrnConfig tgrn_net;
  metric::EmbedderSpec triplet_embedder{metric::EmbedderKind::fixed_random_conv, 101, 64, 3};
  metric::EmbedderSpec identity_embedder{metric::EmbedderKind::fixed_random_conv, 202, 64, 3};

  degrade::DegradationRanges degradation;

  // Synthetic prior-pair generation.
  double warp_magnitude = 3.0;
  double texture_strength = 0.02;
  double fidelity_blur = 1.0;

  int effective_iterations() const;
  void validate() const;
  // Applies the loss-weight and positive-source settings implied by `variant`.
  void apply_variant(Variant v);
  friend bool operator==(const TrainConfig&, const TrainConfig&) = default;
};

std::string_view to_string(Stage s);
std::string_view to_string(Variant v);
std::string_view to_string(PositiveSource p);
Stage parse_stage(std::string_view text);
Variant parse_variant(std::string_view text);
PositiveSource parse_positive(std::string_view text);

// JSON document {"version": 1, "stage": ..., "loss_weights": {...}, ...}.
std::string config_to_json(const TrainConfig& config);
TrainConfig config_from_json(std::string_view text);
TrainConfig load_config(const std::filesystem::path& path);
void save_config(const TrainConfig& config, const std::filesystem::path& path);

// Sets one key addressed by a dotted path ("loss_weights.lambda_id", "seed").
// The value is parsed as JSON, falling back to a plain string.
void apply_override(TrainConfig& config, std::string_view key, std::string_view value);

// Stable FNV-1a over the canonical JSON form.
std::uint64_t config_hash(const TrainConfig& config);

}  // namespace facefuse::train
