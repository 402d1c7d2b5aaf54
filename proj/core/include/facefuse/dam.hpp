#pragma once

#include <cstdint>

#include "facefuse/image.hpp"
#include "facefuse/nn/layers.hpp"

// Deformable alignment: a registration U-Net predicts a dense displacement
// field that warps the generative prior onto the identity-preserving image.
namespace facefuse::dam {

inline constexpr int kDefaultNccWindow = 9;
inline constexpr double kNccEpsilon = 1e-5;

struct RegistrationNetConfig {
  int levels = 3;
  int base_channels = 16;
  // Multiplier on the initial weights of the field head; 0 starts at the identity warp.
  double field_init_scale = 0.01;
  int image_channels = 3;

  void validate() const;
  friend bool operator==(const RegistrationNetConfig&, const RegistrationNetConfig&) = default;
};

struct DamLossWeights {
  double lambda_phi = 1.0;
};

class RegistrationNet {
 public:
  RegistrationNet(const RegistrationNetConfig& config, std::uint64_t seed);
  RegistrationNet(RegistrationNet&&) = default;
  RegistrationNet& operator=(RegistrationNet&&) = default;
  RegistrationNet(const RegistrationNet&) = delete;
  RegistrationNet& operator=(const RegistrationNet&) = delete;

  // (N, C, H, W) pair in signed range -> (N, 2, H, W) displacements in pixels.
  nn::Var<float> forward(const nn::Var<float>& i_f, const nn::Var<float>& i_g) const;

  const RegistrationNetConfig& config() const { return config_; }
  nn::ParameterSet<float>& parameters() { return params_; }
  const nn::ParameterSet<float>& parameters() const { return params_; }
  // Spatial sides must be divisible by this.
  int size_multiple() const { return 1 << (config_.levels - 1); }

 private:
  struct Block {
    nn::Conv2d<float> first;
    nn::Conv2d<float> second;
  };

  RegistrationNetConfig config_;
  nn::ParameterSet<float> params_;
  std::vector<Block> encoder_;
  std::vector<Block> decoder_;
  nn::Conv2d<float> head_;
};

DeformationField predict_field(const RegistrationNet& net, const Image& i_f, const Image& i_g);

// Bilinear, border-clamped resampling of img at p + field(p).
Image warp(const Image& img, const DeformationField& field);

double local_ncc_loss(const Image& i_f, const Image& i_g_warped, int window = kDefaultNccWindow);
double smoothness_loss(const DeformationField& field);
// L_sim(i_f, warp(i_g, field)) + lambda_phi * L_smooth(field)
double dam_loss(const Image& i_f, const Image& i_g, const DeformationField& field,
                const DamLossWeights& weights, int window = kDefaultNccWindow);

}  // namespace facefuse::dam
