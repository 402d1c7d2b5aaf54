#include "facefuse/dam.hpp"

#include <string>

#include "facefuse/error.hpp"
#include "facefuse/tensor_convert.hpp"

namespace facefuse::dam {

using nn::Conv2d;
using nn::Var;

void RegistrationNetConfig::validate() const {
  if (levels < 2) throw InvalidArgument("registration net needs levels >= 2");
  if (base_channels < 4) throw InvalidArgument("registration net needs base_channels >= 4");
  if (image_channels != 1 && image_channels != 3) {
    throw InvalidArgument("registration net image_channels must be 1 or 3");
  }
  if (!(field_init_scale >= 0.0)) throw InvalidArgument("field_init_scale must be >= 0");
}

namespace {

int level_channels(const RegistrationNetConfig& c, int level) {
  return level == 0 ? c.base_channels : 2 * c.base_channels;
}

}  // namespace

RegistrationNet::RegistrationNet(const RegistrationNetConfig& config, std::uint64_t seed)
    : config_(config) {
  config_.validate();
  nn::Rng rng(seed);
  int in = 2 * config_.image_channels;
  for (int i = 0; i < config_.levels; ++i) {
    const int ch = level_channels(config_, i);
    const std::string name = "enc" + std::to_string(i);
    Block b{Conv2d<float>(params_, name + ".0", in, ch, 3, i == 0 ? 1 : 2, rng),
            Conv2d<float>(params_, name + ".1", ch, ch, 3, 1, rng)};
    encoder_.push_back(std::move(b));
    in = ch;
  }
  for (int i = config_.levels - 2; i >= 0; --i) {
    const int ch = level_channels(config_, i);
    const std::string name = "dec" + std::to_string(i);
    Block b{Conv2d<float>(params_, name + ".0", in + ch, ch, 3, 1, rng),
            Conv2d<float>(params_, name + ".1", ch, ch, 3, 1, rng)};
    decoder_.push_back(std::move(b));
    in = ch;
  }
  head_ = Conv2d<float>(params_, "head", in, 2, 3, 1, rng, true, config_.field_init_scale);
}

Var<float> RegistrationNet::forward(const Var<float>& i_f, const Var<float>& i_g) const {
  const auto& s = i_f.shape();
  if (!(s == i_g.shape())) throw ShapeMismatch("registration: I_F and I_G shapes differ");
  if (s.c != config_.image_channels) {
    throw ShapeMismatch("registration: expected " + std::to_string(config_.image_channels) +
                        " channels, got " + std::to_string(s.c));
  }
  const int m = size_multiple();
  if (s.h % m != 0 || s.w % m != 0) {
    throw ShapeMismatch("registration: image sides must be divisible by " + std::to_string(m));
  }
  const float slope = nn::kLeakySlope;
  std::vector<Var<float>> skips;
  Var<float> x = nn::concat_channels(i_f, i_g);
  for (const auto& block : encoder_) {
    x = nn::leaky_relu(block.first(x), slope);
    x = nn::leaky_relu(block.second(x), slope);
    skips.push_back(x);
  }
  for (std::size_t d = 0; d < decoder_.size(); ++d) {
    const auto& skip = skips[skips.size() - 2 - d];
    x = nn::concat_channels(nn::upsample_nearest(x, 2), skip);
    x = nn::leaky_relu(decoder_[d].first(x), slope);
    x = nn::leaky_relu(decoder_[d].second(x), slope);
  }
  return head_(x);
}

DeformationField predict_field(const RegistrationNet& net, const Image& i_f, const Image& i_g) {
  if (!i_f.same_shape(i_g)) throw ShapeMismatch("predict_field: I_F and I_G shapes differ");
  nn::NoGradGuard no_grad;
  auto f = Var<float>::constant(image_to_tensor<float>(i_f, ValueRange::signed_unit));
  auto g = Var<float>::constant(image_to_tensor<float>(i_g, ValueRange::signed_unit));
  return tensor_to_field(net.forward(f, g).value(), 0);
}

namespace {

void require_field_shape(const Image& img, const DeformationField& field, const char* op) {
  if (img.height() != field.height() || img.width() != field.width()) {
    throw ShapeMismatch(std::string(op) + ": field shape does not match image");
  }
}

}  // namespace

Image warp(const Image& img, const DeformationField& field) {
  require_field_shape(img, field, "warp");
  auto x = Var<double>::constant(image_to_tensor<double>(img, img.range()));
  auto f = Var<double>::constant(fields_to_tensor<double>(std::span<const DeformationField>(&field, 1)));
  return tensor_to_image(nn::warp(x, f).value(), 0, img.range());
}

double local_ncc_loss(const Image& i_f, const Image& i_g_warped, int window) {
  if (!i_f.same_shape(i_g_warped)) throw ShapeMismatch("local_ncc_loss: image shapes differ");
  auto a = Var<double>::constant(image_to_tensor<double>(i_f, i_f.range()));
  auto b = Var<double>::constant(image_to_tensor<double>(i_g_warped, i_g_warped.range()));
  return nn::local_ncc_loss(a, b, window, kNccEpsilon).item();
}

double smoothness_loss(const DeformationField& field) {
  auto f = Var<double>::constant(fields_to_tensor<double>(std::span<const DeformationField>(&field, 1)));
  return nn::smoothness_loss(f).item();
}

double dam_loss(const Image& i_f, const Image& i_g, const DeformationField& field,
                const DamLossWeights& weights, int window) {
  if (!(weights.lambda_phi >= 0.0)) throw InvalidArgument("dam_loss: lambda_phi must be >= 0");
  require_field_shape(i_g, field, "dam_loss");
  return local_ncc_loss(i_f, warp(i_g, field), window) + weights.lambda_phi * smoothness_loss(field);
}

}  // namespace facefuse::dam
