#include "facefuse/metric.hpp"

#include <cmath>
#include <fstream>
#include <sstream>
#include <string>

#include "facefuse/error.hpp"
#include "facefuse/tensor_convert.hpp"

namespace facefuse::metric {

using nn::Var;

Landmarks load_landmarks(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) {
    if (!std::filesystem::exists(path)) throw FileNotFound("no such landmark file: " + path.string());
    throw IoError("cannot open landmark file: " + path.string());
  }
  Landmarks points;
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    const auto first = line.find_first_not_of(" \t\r");
    if (first == std::string::npos || line[first] == '#') continue;
    std::istringstream fields(line);
    Point p;
    std::string extra;
    if (!(fields >> p.x >> p.y) || (fields >> extra) || !std::isfinite(p.x) ||
        !std::isfinite(p.y)) {
      throw CorruptData(path.string() + ":" + std::to_string(line_no) +
                        ": expected two finite numbers \"x y\"");
    }
    points.push_back(p);
  }
  return points;
}

void save_landmarks(const Landmarks& points, const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot write landmark file: " + path.string());
  out.precision(17);
  for (const auto& p : points) out << p.x << ' ' << p.y << '\n';
  if (!out) throw IoError("failed writing landmark file: " + path.string());
}

namespace {

struct Ellipse {
  double cx, cy, rx, ry;
  bool contains(double x, double y) const {
    const double u = (x - cx) / rx;
    const double v = (y - cy) / ry;
    return u * u + v * v <= 1.0;
  }
};

}  // namespace

SemanticMask mask_from_landmarks(int height, int width, const Landmarks& points) {
  if (points.size() != kLandmarkCount) {
    throw InvalidArgument("mask_from_landmarks: expected 5 landmarks, got " +
                          std::to_string(points.size()));
  }
  const Point& le = points[0];
  const Point& re = points[1];
  const Point& nose = points[2];
  const Point& lm = points[3];
  const Point& rm = points[4];
  const double eye_dist = std::max(std::hypot(re.x - le.x, re.y - le.y), 2.0);
  const double mouth_w = std::hypot(rm.x - lm.x, rm.y - lm.y);
  const Ellipse parts[] = {
      {le.x, le.y, 0.32 * eye_dist, 0.2 * eye_dist},
      {re.x, re.y, 0.32 * eye_dist, 0.2 * eye_dist},
      {nose.x, nose.y - 0.12 * eye_dist, 0.2 * eye_dist, 0.34 * eye_dist},
      {0.5 * (lm.x + rm.x), 0.5 * (lm.y + rm.y), 0.5 * mouth_w + 0.12 * eye_dist,
       0.22 * eye_dist},
  };
  std::vector<std::uint8_t> values(static_cast<std::size_t>(height) * width, 0);
  for (int y = 0; y < height; ++y) {
    for (int x = 0; x < width; ++x) {
      for (const auto& e : parts) {
        if (e.contains(x, y)) {
          values[static_cast<std::size_t>(y) * width + x] = 1;
          break;
        }
      }
    }
  }
  return SemanticMask(height, width, std::move(values));
}

Image build_anchor_positive(const Image& i_f, const Image& i_warp, const SemanticMask& m) {
  if (!i_f.same_shape(i_warp)) {
    throw ShapeMismatch("build_anchor_positive: I_F and I_warp shapes differ");
  }
  if (i_f.range() != i_warp.range()) {
    throw InvalidArgument("build_anchor_positive: I_F and I_warp value ranges differ");
  }
  if (m.height() != i_f.height() || m.width() != i_f.width()) {
    throw ShapeMismatch("build_anchor_positive: mask shape does not match images");
  }
  const int c = i_f.channels();
  const auto f = i_f.pixels();
  const auto w = i_warp.pixels();
  const auto mv = m.values();
  std::vector<double> out(f.size());
  for (std::size_t i = 0; i < out.size(); ++i) {
    const double mi = mv[i / c];
    out[i] = f[i] * mi + w[i] * (1.0 - mi);
  }
  return Image(i_f.height(), i_f.width(), c, i_f.range(), std::move(out));
}

Var<float> build_anchor_positive(const Var<float>& i_f, const Var<float>& i_warp,
                                 const nn::Tensor<float>& masks) {
  const auto& s = i_f.shape();
  if (!(s == i_warp.shape())) throw ShapeMismatch("anchor positive: I_F and I_warp shapes differ");
  const auto& ms = masks.shape();
  if (ms.n != s.n || ms.c != 1 || ms.h != s.h || ms.w != s.w) {
    throw ShapeMismatch("anchor positive: mask " + ms.str() + " vs images " + s.str());
  }
  nn::Tensor<float> on(s);
  nn::Tensor<float> off(s);
  for (int n = 0; n < s.n; ++n) {
    for (int c = 0; c < s.c; ++c) {
      for (int y = 0; y < s.h; ++y) {
        for (int x = 0; x < s.w; ++x) {
          const float m = masks.at(n, 0, y, x);
          on.at(n, c, y, x) = m;
          off.at(n, c, y, x) = 1.0f - m;
        }
      }
    }
  }
  return nn::add(nn::mul(i_f, Var<float>::constant(std::move(on))),
                 nn::mul(i_warp, Var<float>::constant(std::move(off))));
}

Embedding Embedding::normalize(std::vector<double> raw) {
  double sq = 0.0;
  for (double v : raw) sq += v * v;
  const double n = std::sqrt(sq);
  if (!(n > 0.0) || !std::isfinite(n)) {
    throw InvalidArgument("Embedding::normalize: vector has zero or non-finite norm");
  }
  for (double& v : raw) v /= n;
  return Embedding{std::move(raw), true};
}

double Embedding::norm() const {
  double sq = 0.0;
  for (double v : vector) sq += v * v;
  return std::sqrt(sq);
}

double cosine(const Embedding& a, const Embedding& b) {
  if (a.vector.size() != b.vector.size()) throw ShapeMismatch("cosine: dimension mismatch");
  double dot = 0.0;
  for (std::size_t i = 0; i < a.vector.size(); ++i) dot += a.vector[i] * b.vector[i];
  return dot / (a.norm() * b.norm());
}

RandomConvEmbedder::RandomConvEmbedder(const EmbedderSpec& spec) : spec_(spec) {
  if (spec.kind != EmbedderKind::fixed_random_conv) {
    throw InvalidArgument("RandomConvEmbedder requires the fixed_random_conv kind");
  }
  if (spec.output_dim < 2) throw InvalidArgument("embedder output_dim must be >= 2");
  if (spec.image_channels != 1 && spec.image_channels != 3) {
    throw InvalidArgument("embedder image_channels must be 1 or 3");
  }
  nn::Rng rng(spec.seed);
  c1_ = nn::Conv2d<float>(params_, "c1", spec.image_channels, 16, 3, 2, rng);
  c2_ = nn::Conv2d<float>(params_, "c2", 16, 32, 3, 2, rng);
  c3_ = nn::Conv2d<float>(params_, "c3", 32, 32, 3, 2, rng);
  proj_ = nn::Linear<float>(params_, "proj", 32 * 16, spec.output_dim, rng);
  params_.set_trainable(false);
}

Var<float> RandomConvEmbedder::operator()(const Var<float>& images) const {
  if (images.shape().c != spec_.image_channels) {
    throw ShapeMismatch("embedder: expected " + std::to_string(spec_.image_channels) +
                        " channels, got " + std::to_string(images.shape().c));
  }
  const float slope = nn::kLeakySlope;
  Var<float> x = nn::leaky_relu(c1_(images), slope);
  x = nn::leaky_relu(c2_(x), slope);
  x = nn::leaky_relu(c3_(x), slope);
  x = nn::adaptive_avg_pool(x, 4, 4);
  return nn::l2_normalize(proj_(x));
}

std::unique_ptr<FeatureExtractor> make_embedder(const EmbedderSpec& spec) {
  if (spec.kind == EmbedderKind::external) {
    throw Unavailable("no external embedder is bundled; implement FeatureExtractor to supply one");
  }
  return std::make_unique<RandomConvEmbedder>(spec);
}

Embedding embed(const FeatureExtractor& embedder, const Image& img) {
  nn::NoGradGuard no_grad;
  auto x = Var<float>::constant(image_to_tensor<float>(img, ValueRange::signed_unit));
  const auto e = embedder(x);
  const auto v = e.value().values();
  std::vector<double> raw(v.begin(), v.end());
  return Embedding::normalize(std::move(raw));
}

Embedding embed(const EmbedderSpec& spec, const Image& img) {
  return embed(*make_embedder(spec), img);
}

namespace {

void require_normalized(const Embedding& e, const char* role) {
  if (!e.normalized || std::abs(e.norm() - 1.0) > kNormTolerance) {
    throw InvalidArgument(std::string("cosine_triplet_loss: ") + role +
                          " embedding is not L2-normalized");
  }
}

Var<double> row(const Embedding& e) {
  const int d = static_cast<int>(e.vector.size());
  return Var<double>::constant(nn::Tensor<double>(nn::Shape{1, d, 1, 1}, e.vector));
}

}  // namespace

double cosine_triplet_loss(const Embedding& f_p, const Embedding& f_a, const Embedding& f_n,
                           double lambda_triplet) {
  require_normalized(f_p, "positive");
  require_normalized(f_a, "anchor");
  require_normalized(f_n, "negative");
  if (f_p.vector.size() != f_a.vector.size() || f_n.vector.size() != f_a.vector.size()) {
    throw ShapeMismatch("cosine_triplet_loss: embedding dimensions differ");
  }
  if (!(lambda_triplet >= 0.0)) throw InvalidArgument("cosine_triplet_loss: lambda must be >= 0");
  return nn::cosine_triplet_loss(row(f_p), row(f_a), row(f_n), lambda_triplet).item();
}

}  // namespace facefuse::metric
