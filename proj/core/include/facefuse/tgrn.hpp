#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "facefuse/image.hpp"
#include "facefuse/nn/layers.hpp"

// Texture-prior guided restoration: a U-Net over I_F whose encoder features
// are fused, level by level, with texture features pulled from the aligned prior.
namespace facefuse::tgrn {

enum class FusionActivation { sigmoid, linear };

struct TgrnConfig {
  int levels = 3;
  std::vector<int> channels{16, 32, 64};
  int mlp_hidden = 32;
  int image_channels = 3;
  bool bias = true;
  FusionActivation fusion_activation = FusionActivation::sigmoid;

  void validate() const;
  friend bool operator==(const TgrnConfig&, const TgrnConfig&) = default;
};

struct FusionWeights {
  std::vector<double> w_e;
  std::vector<double> w_t;
};

// Three fully connected layers mapping [v_e, v_t] (2d) to [w_e, w_t] (2d).
template <typename T>
class FusionMlp {
 public:
  FusionMlp() = default;
  FusionMlp(nn::ParameterSet<T>& params, const std::string& name, int channels, int hidden,
            FusionActivation activation, nn::Rng& rng, bool bias = true);

  // (N, d, 1, 1) descriptors -> (w_e, w_t), each (N, d, 1, 1).
  std::pair<nn::Var<T>, nn::Var<T>> operator()(const nn::Var<T>& v_e, const nn::Var<T>& v_t) const;
  int channels() const { return channels_; }

 private:
  int channels_ = 0;
  FusionActivation activation_ = FusionActivation::sigmoid;
  nn::Linear<T> fc1_, fc2_, fc3_;
};

// Z_m = w_e (.) Z_e + w_t (.) Z_t with per-channel broadcast.
template <typename T>
nn::Var<T> fuse(const nn::Var<T>& z_e, const nn::Var<T>& z_t, const nn::Var<T>& w_e,
                const nn::Var<T>& w_t);

// Per level: conv, conv, adaptive max pool to the encoder's size, two residual blocks.
class TextureAttentionModule {
 public:
  TextureAttentionModule(nn::ParameterSet<float>& params, const TgrnConfig& config, nn::Rng& rng);

  // targets[i] is the (h, w) of encoder level i.
  std::vector<nn::Var<float>> operator()(const nn::Var<float>& i_warp,
                                         std::span<const std::pair<int, int>> targets) const;
  int levels() const { return static_cast<int>(levels_.size()); }

 private:
  struct Level {
    nn::Conv2d<float> conv_a, conv_b;
    nn::Conv2d<float> res1_a, res1_b, res2_a, res2_b;
  };
  std::vector<Level> levels_;
};

class TgrnNet {
 public:
  TgrnNet(const TgrnConfig& config, std::uint64_t seed);
  TgrnNet(TgrnNet&&) = default;
  TgrnNet& operator=(TgrnNet&&) = default;
  TgrnNet(const TgrnNet&) = delete;
  TgrnNet& operator=(const TgrnNet&) = delete;

  std::vector<nn::Var<float>> encode(const nn::Var<float>& i_f) const;
  // Signed-range (N, C, H, W) inputs -> tanh(atanh(I_F) + decoder head), same shape.
  nn::Var<float> forward(const nn::Var<float>& i_f, const nn::Var<float>& i_warp) const;

  const TgrnConfig& config() const { return config_; }
  const TextureAttentionModule& tam() const { return tam_; }
  const FusionMlp<float>& fusion(int level) const { return fusion_[level]; }
  nn::ParameterSet<float>& parameters() { return params_; }
  const nn::ParameterSet<float>& parameters() const { return params_; }
  int size_multiple() const { return 1 << (config_.levels - 1); }

 private:
  struct Block {
    nn::Conv2d<float> first, second;
  };

  void check_input(const nn::Shape& s) const;

  TgrnConfig config_;
  nn::ParameterSet<float> params_;
  std::vector<Block> encoder_;
  TextureAttentionModule tam_;
  std::vector<FusionMlp<float>> fusion_;
  std::vector<Block> decoder_;
  nn::Conv2d<float> head_;
};

// Value-level API over the HWC types.
std::vector<FeatureMap> encode(const TgrnNet& net, const Image& i_f);
std::vector<FeatureMap> tam_extract(const TextureAttentionModule& tam, const TgrnConfig& config,
                                    const Image& i_warp,
                                    std::span<const std::pair<int, int>> target_shapes);
FeatureMap adaptive_max_pool(const FeatureMap& z, int height, int width);
std::vector<double> global_avg_pool(const FeatureMap& z);
FusionWeights fusion_weights(const FusionMlp<double>& mlp, std::span<const double> v_e,
                             std::span<const double> v_t);
FeatureMap fuse(const FeatureMap& z_e, const FeatureMap& z_t, const FusionWeights& w);
Image tgrn_forward(const TgrnNet& net, const Image& i_f, const Image& i_warp);

extern template class FusionMlp<float>;
extern template class FusionMlp<double>;

}  // namespace facefuse::tgrn
