#pragma once

#include <cstdint>
#include <filesystem>
#include <memory>
#include <vector>

#include "facefuse/image.hpp"
#include "facefuse/nn/layers.hpp"

// Metric-learning supervision: anchor-positive synthesis, frozen embedders
// and the cosine triplet loss.
namespace facefuse::metric {

inline constexpr double kNormTolerance = 1e-6;

struct Point {
  double x = 0.0;
  double y = 0.0;
  friend bool operator==(const Point&, const Point&) = default;
};

// Five-point convention: left eye, right eye, nose, left mouth corner, right mouth corner.
using Landmarks = std::vector<Point>;
inline constexpr std::size_t kLandmarkCount = 5;

Landmarks load_landmarks(const std::filesystem::path& path);
void save_landmarks(const Landmarks& points, const std::filesystem::path& path);

// Union of ellipses over both eyes, the nose and the mouth.
SemanticMask mask_from_landmarks(int height, int width, const Landmarks& points);

// I_AP = I_F * M + I_warp * (1 - M)
Image build_anchor_positive(const Image& i_f, const Image& i_warp, const SemanticMask& m);
// Network-side variant; masks is (N, 1, H, W) and broadcasts over channels.
nn::Var<float> build_anchor_positive(const nn::Var<float>& i_f, const nn::Var<float>& i_warp,
                                     const nn::Tensor<float>& masks);

struct Embedding {
  std::vector<double> vector;
  bool normalized = false;

  static Embedding normalize(std::vector<double> raw);
  double norm() const;
};

double cosine(const Embedding& a, const Embedding& b);

enum class EmbedderKind { fixed_random_conv, external };

struct EmbedderSpec {
  EmbedderKind kind = EmbedderKind::fixed_random_conv;
  std::uint64_t seed = 0;
  int output_dim = 64;
  int image_channels = 3;
  friend bool operator==(const EmbedderSpec&, const EmbedderSpec&) = default;
};

// Frozen feature extractor over signed-range (N, C, H, W) batches, returning
// L2-normalized (N, d, 1, 1) rows. Gradients flow to the input only.
class FeatureExtractor {
 public:
  virtual ~FeatureExtractor() = default;
  virtual nn::Var<float> operator()(const nn::Var<float>& images) const = 0;
  virtual int output_dim() const = 0;
};

// Three strided convolutions, 4x4 average pooling and a linear projection,
// all drawn from a fixed seed and never trained.
class RandomConvEmbedder final : public FeatureExtractor {
 public:
  explicit RandomConvEmbedder(const EmbedderSpec& spec);

  nn::Var<float> operator()(const nn::Var<float>& images) const override;
  int output_dim() const override { return spec_.output_dim; }
  const nn::ParameterSet<float>& parameters() const { return params_; }

 private:
  EmbedderSpec spec_;
  nn::ParameterSet<float> params_;
  nn::Conv2d<float> c1_, c2_, c3_;
  nn::Linear<float> proj_;
};

// Throws Unavailable for the external kind: external backbones are supplied
// by implementing FeatureExtractor directly.
std::unique_ptr<FeatureExtractor> make_embedder(const EmbedderSpec& spec);

Embedding embed(const FeatureExtractor& embedder, const Image& img);
Embedding embed(const EmbedderSpec& spec, const Image& img);

// lambda * softplus(f_n.f_a - f_p.f_a), the stable form of
// -lambda * log(e^{cos+} / (e^{cos+} + e^{cos-})).
double cosine_triplet_loss(const Embedding& f_p, const Embedding& f_a, const Embedding& f_n,
                           double lambda_triplet = 1.0);

}  // namespace facefuse::metric
