#include "facefuse/tgrn.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "facefuse/error.hpp"
#include "facefuse/tensor_convert.hpp"

namespace facefuse::tgrn {

using nn::Conv2d;
using nn::Linear;
using nn::Var;

void TgrnConfig::validate() const {
  if (levels < 1) throw InvalidArgument("tgrn needs levels >= 1");
  if (static_cast<int>(channels.size()) != levels) {
    throw InvalidArgument("tgrn channels list has " + std::to_string(channels.size()) +
                          " entries for " + std::to_string(levels) + " levels");
  }
  for (int d : channels) {
    if (d < 4) throw InvalidArgument("tgrn channel counts must be >= 4");
  }
  if (mlp_hidden < 1) throw InvalidArgument("tgrn mlp_hidden must be >= 1");
  if (image_channels != 1 && image_channels != 3) {
    throw InvalidArgument("tgrn image_channels must be 1 or 3");
  }
}

template <typename T>
FusionMlp<T>::FusionMlp(nn::ParameterSet<T>& params, const std::string& name, int channels,
                        int hidden, FusionActivation activation, nn::Rng& rng, bool bias)
    : channels_(channels),
      activation_(activation),
      fc1_(params, name + ".fc1", 2 * channels, hidden, rng, bias),
      fc2_(params, name + ".fc2", hidden, hidden, rng, bias),
      fc3_(params, name + ".fc3", hidden, 2 * channels, rng, bias) {}

template <typename T>
std::pair<Var<T>, Var<T>> FusionMlp<T>::operator()(const Var<T>& v_e, const Var<T>& v_t) const {
  const auto& se = v_e.shape();
  if (!(se == v_t.shape()) || se.c != channels_ || se.h != 1 || se.w != 1) {
    throw ShapeMismatch("fusion mlp: expected two (N, " + std::to_string(channels_) +
                        ", 1, 1) descriptors, got " + se.str() + " and " + v_t.shape().str());
  }
  const T slope = static_cast<T>(nn::kLeakySlope);
  Var<T> h = nn::leaky_relu(fc1_(nn::concat_channels(v_e, v_t)), slope);
  h = nn::leaky_relu(fc2_(h), slope);
  h = fc3_(h);
  if (activation_ == FusionActivation::sigmoid) h = nn::sigmoid(h);
  return {nn::slice_channels(h, 0, channels_), nn::slice_channels(h, channels_, channels_)};
}

template <typename T>
Var<T> fuse(const Var<T>& z_e, const Var<T>& z_t, const Var<T>& w_e, const Var<T>& w_t) {
  if (!(z_e.shape() == z_t.shape())) {
    throw ShapeMismatch("fuse: Z_e " + z_e.shape().str() + " vs Z_t " + z_t.shape().str());
  }
  return nn::add(nn::channel_mul(z_e, w_e), nn::channel_mul(z_t, w_t));
}

namespace {

Var<float> residual(const Conv2d<float>& a, const Conv2d<float>& b, const Var<float>& x) {
  return nn::add(x, b(nn::leaky_relu(a(x), nn::kLeakySlope)));
}

// atanh(I_F) so that a zero head reproduces I_F; the input is treated as data.
Var<float> base_logits(const Var<float>& i_f) {
  constexpr float kEdge = 0.999f;
  nn::Tensor<float> t = i_f.value();
  for (float& v : t.values()) v = std::atanh(std::clamp(v, -kEdge, kEdge));
  return Var<float>::constant(std::move(t));
}

}  // namespace

TextureAttentionModule::TextureAttentionModule(nn::ParameterSet<float>& params,
                                               const TgrnConfig& config, nn::Rng& rng) {
  int in = config.image_channels;
  const bool bias = config.bias;
  for (int i = 0; i < config.levels; ++i) {
    const int d = config.channels[i];
    const std::string name = "tam" + std::to_string(i);
    Level level{Conv2d<float>(params, name + ".conv_a", in, d, 3, 1, rng, bias),
                Conv2d<float>(params, name + ".conv_b", d, d, 3, 1, rng, bias),
                Conv2d<float>(params, name + ".res1_a", d, d, 3, 1, rng, bias),
                Conv2d<float>(params, name + ".res1_b", d, d, 3, 1, rng, bias, 0.5),
                Conv2d<float>(params, name + ".res2_a", d, d, 3, 1, rng, bias),
                Conv2d<float>(params, name + ".res2_b", d, d, 3, 1, rng, bias, 0.5)};
    levels_.push_back(std::move(level));
    in = d;
  }
}

std::vector<Var<float>> TextureAttentionModule::operator()(
    const Var<float>& i_warp, std::span<const std::pair<int, int>> targets) const {
  if (targets.size() != levels_.size()) {
    throw ShapeMismatch("tam: " + std::to_string(targets.size()) + " target shapes for " +
                        std::to_string(levels_.size()) + " levels");
  }
  const float slope = nn::kLeakySlope;
  std::vector<Var<float>> out;
  Var<float> x = i_warp;
  for (std::size_t i = 0; i < levels_.size(); ++i) {
    const auto [th, tw] = targets[i];
    const auto& s = x.shape();
    if (th < 1 || tw < 1 || th > s.h || tw > s.w) {
      throw ShapeMismatch("tam: target " + std::to_string(th) + "x" + std::to_string(tw) +
                          " at level " + std::to_string(i) + " exceeds input " +
                          std::to_string(s.h) + "x" + std::to_string(s.w));
    }
    const auto& level = levels_[i];
    x = nn::leaky_relu(level.conv_a(x), slope);
    x = nn::leaky_relu(level.conv_b(x), slope);
    x = nn::adaptive_max_pool(x, th, tw);
    x = residual(level.res1_a, level.res1_b, x);
    x = residual(level.res2_a, level.res2_b, x);
    out.push_back(x);
  }
  return out;
}

TgrnNet::TgrnNet(const TgrnConfig& config, std::uint64_t seed)
    : config_((config.validate(), config)),
      tam_([this, seed]() {
        nn::Rng rng(seed ^ 0x7a3dULL);
        return TextureAttentionModule(params_, config_, rng);
      }()) {
  nn::Rng rng(seed);
  const bool bias = config_.bias;
  int in = config_.image_channels;
  for (int i = 0; i < config_.levels; ++i) {
    const int d = config_.channels[i];
    const std::string name = "enc" + std::to_string(i);
    encoder_.push_back(Block{Conv2d<float>(params_, name + ".0", in, d, 3, i == 0 ? 1 : 2, rng, bias),
                             Conv2d<float>(params_, name + ".1", d, d, 3, 1, rng, bias)});
    in = d;
  }
  for (int i = 0; i < config_.levels; ++i) {
    fusion_.emplace_back(params_, "fusion" + std::to_string(i), config_.channels[i],
                         config_.mlp_hidden, config_.fusion_activation, rng, bias);
  }
  for (int i = config_.levels - 2; i >= 0; --i) {
    const int d = config_.channels[i];
    const std::string name = "dec" + std::to_string(i);
    decoder_.push_back(Block{Conv2d<float>(params_, name + ".0", in + d, d, 3, 1, rng, bias),
                             Conv2d<float>(params_, name + ".1", d, d, 3, 1, rng, bias)});
    in = d;
  }
  head_ = Conv2d<float>(params_, "head", in, config_.image_channels, 3, 1, rng, bias, 0.1);
}

void TgrnNet::check_input(const nn::Shape& s) const {
  if (s.c != config_.image_channels) {
    throw ShapeMismatch("tgrn: expected " + std::to_string(config_.image_channels) +
                        " channels, got " + std::to_string(s.c));
  }
  const int m = size_multiple();
  if (s.h % m != 0 || s.w % m != 0 || s.h / m < 2 || s.w / m < 2) {
    throw ShapeMismatch("tgrn: " + std::to_string(s.h) + "x" + std::to_string(s.w) +
                        " is too small or not divisible by " + std::to_string(m) + " for " +
                        std::to_string(config_.levels) + " levels");
  }
}

std::vector<Var<float>> TgrnNet::encode(const Var<float>& i_f) const {
  check_input(i_f.shape());
  const float slope = nn::kLeakySlope;
  std::vector<Var<float>> feats;
  Var<float> x = i_f;
  for (const auto& block : encoder_) {
    x = nn::leaky_relu(block.first(x), slope);
    x = nn::leaky_relu(block.second(x), slope);
    feats.push_back(x);
  }
  return feats;
}

Var<float> TgrnNet::forward(const Var<float>& i_f, const Var<float>& i_warp) const {
  if (!(i_f.shape() == i_warp.shape())) {
    throw ShapeMismatch("tgrn: I_F " + i_f.shape().str() + " vs I_warp " + i_warp.shape().str());
  }
  const auto z_e = encode(i_f);
  std::vector<std::pair<int, int>> targets;
  for (const auto& z : z_e) targets.emplace_back(z.shape().h, z.shape().w);
  const auto z_t = tam_(i_warp, targets);

  std::vector<Var<float>> z_m;
  for (int i = 0; i < config_.levels; ++i) {
    auto [w_e, w_t] = fusion_[i](nn::global_avg_pool(z_e[i]), nn::global_avg_pool(z_t[i]));
    z_m.push_back(fuse(z_e[i], z_t[i], w_e, w_t));
  }

  const float slope = nn::kLeakySlope;
  Var<float> x = z_m.back();
  for (std::size_t d = 0; d < decoder_.size(); ++d) {
    x = nn::concat_channels(nn::upsample_nearest(x, 2), z_m[z_m.size() - 2 - d]);
    x = nn::leaky_relu(decoder_[d].first(x), slope);
    x = nn::leaky_relu(decoder_[d].second(x), slope);
  }
  return nn::tanh(nn::add(base_logits(i_f), head_(x)));
}

namespace {

Var<float> signed_input(const Image& img) {
  return Var<float>::constant(image_to_tensor<float>(img, ValueRange::signed_unit));
}

std::vector<FeatureMap> to_features(const std::vector<Var<float>>& vars) {
  std::vector<FeatureMap> out;
  out.reserve(vars.size());
  for (const auto& v : vars) out.push_back(tensor_to_feature(v.value(), 0));
  return out;
}

Var<double> descriptor(std::span<const double> v) {
  const int d = static_cast<int>(v.size());
  return Var<double>::constant(nn::Tensor<double>(nn::Shape{1, d, 1, 1}, {v.begin(), v.end()}));
}

}  // namespace

std::vector<FeatureMap> encode(const TgrnNet& net, const Image& i_f) {
  nn::NoGradGuard no_grad;
  return to_features(net.encode(signed_input(i_f)));
}

std::vector<FeatureMap> tam_extract(const TextureAttentionModule& tam, const TgrnConfig& config,
                                    const Image& i_warp,
                                    std::span<const std::pair<int, int>> target_shapes) {
  if (static_cast<int>(target_shapes.size()) != config.levels || tam.levels() != config.levels) {
    throw ShapeMismatch("tam_extract: " + std::to_string(target_shapes.size()) +
                        " target shapes for a " + std::to_string(config.levels) + "-level config");
  }
  if (i_warp.channels() != config.image_channels) {
    throw ShapeMismatch("tam_extract: image channel count does not match config");
  }
  nn::NoGradGuard no_grad;
  return to_features(tam(signed_input(i_warp), target_shapes));
}

FeatureMap adaptive_max_pool(const FeatureMap& z, int height, int width) {
  if (height < 1 || width < 1 || height > z.height() || width > z.width()) {
    throw ShapeMismatch("adaptive_max_pool: target larger than input or empty");
  }
  auto x = Var<double>::constant(feature_to_tensor<double>(z));
  return tensor_to_feature(nn::adaptive_max_pool(x, height, width).value(), 0);
}

std::vector<double> global_avg_pool(const FeatureMap& z) {
  auto x = Var<double>::constant(feature_to_tensor<double>(z));
  const auto pooled = nn::global_avg_pool(x);
  const auto v = pooled.value().values();
  return {v.begin(), v.end()};
}

FusionWeights fusion_weights(const FusionMlp<double>& mlp, std::span<const double> v_e,
                             std::span<const double> v_t) {
  if (v_e.size() != v_t.size() || static_cast<int>(v_e.size()) != mlp.channels()) {
    throw ShapeMismatch("fusion_weights: descriptor sizes " + std::to_string(v_e.size()) + "/" +
                        std::to_string(v_t.size()) + " vs mlp width " +
                        std::to_string(mlp.channels()));
  }
  nn::NoGradGuard no_grad;
  auto [w_e, w_t] = mlp(descriptor(v_e), descriptor(v_t));
  const auto e = w_e.value().values();
  const auto t = w_t.value().values();
  return {{e.begin(), e.end()}, {t.begin(), t.end()}};
}

FeatureMap fuse(const FeatureMap& z_e, const FeatureMap& z_t, const FusionWeights& w) {
  if (z_e.height() != z_t.height() || z_e.width() != z_t.width() || z_e.depth() != z_t.depth()) {
    throw ShapeMismatch("fuse: Z_e and Z_t shapes differ");
  }
  const auto d = static_cast<std::size_t>(z_e.depth());
  if (w.w_e.size() != d || w.w_t.size() != d) {
    throw ShapeMismatch("fuse: weight length does not match channel count");
  }
  auto e = Var<double>::constant(feature_to_tensor<double>(z_e));
  auto t = Var<double>::constant(feature_to_tensor<double>(z_t));
  return tensor_to_feature(fuse(e, t, descriptor(w.w_e), descriptor(w.w_t)).value(), 0);
}

Image tgrn_forward(const TgrnNet& net, const Image& i_f, const Image& i_warp) {
  if (!i_f.same_shape(i_warp)) throw ShapeMismatch("tgrn_forward: I_F and I_warp shapes differ");
  nn::NoGradGuard no_grad;
  return tensor_to_image(net.forward(signed_input(i_f), signed_input(i_warp)).value(), 0,
                         ValueRange::signed_unit);
}

template class FusionMlp<float>;
template class FusionMlp<double>;
template Var<float> fuse(const Var<float>&, const Var<float>&, const Var<float>&,
                         const Var<float>&);
template Var<double> fuse(const Var<double>&, const Var<double>&, const Var<double>&,
                          const Var<double>&);

}  // namespace facefuse::tgrn
