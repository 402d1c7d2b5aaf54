#include "facefuse/degrade.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <random>

#include <json.hpp>

#include "facefuse/error.hpp"
#include "facefuse/image_io.hpp"

namespace facefuse::degrade {

namespace {

int reflect101(int i, int n) {
  if (n == 1) return 0;
  const int period = 2 * (n - 1);
  i %= period;
  if (i < 0) i += period;
  return i < n ? i : period - i;
}

double range_width(ValueRange r) { return range_max(r) - range_min(r); }

}  // namespace

std::vector<double> gaussian_kernel(double sigma) {
  if (!(sigma >= 0.0)) throw InvalidArgument("gaussian_kernel: sigma must be >= 0");
  if (sigma == 0.0) return {1.0};
  const int radius = static_cast<int>(std::ceil(3.0 * sigma));
  std::vector<double> k(2 * radius + 1);
  double total = 0.0;
  for (int i = -radius; i <= radius; ++i) {
    k[i + radius] = std::exp(-(i * i) / (2.0 * sigma * sigma));
    total += k[i + radius];
  }
  for (double& v : k) v /= total;
  return k;
}

Image gaussian_blur(const Image& img, double sigma) {
  if (!(sigma >= 0.0)) throw InvalidArgument("gaussian_blur: sigma must be >= 0");
  if (sigma == 0.0) return img;
  const auto k = gaussian_kernel(sigma);
  const int r = static_cast<int>(k.size() / 2);
  const int h = img.height(), w = img.width(), c = img.channels();
  std::vector<double> tmp(img.size()), out(img.size());
  const auto src = img.pixels();
  auto idx = [w, c](int y, int x, int ch) { return (static_cast<std::size_t>(y) * w + x) * c + ch; };
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      for (int ch = 0; ch < c; ++ch) {
        double acc = 0.0;
        for (int t = -r; t <= r; ++t) acc += k[t + r] * src[idx(y, reflect101(x + t, w), ch)];
        tmp[idx(y, x, ch)] = acc;
      }
    }
  }
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      for (int ch = 0; ch < c; ++ch) {
        double acc = 0.0;
        for (int t = -r; t <= r; ++t) acc += k[t + r] * tmp[idx(reflect101(y + t, h), x, ch)];
        out[idx(y, x, ch)] = acc;
      }
    }
  }
  return Image::clipped(h, w, c, img.range(), std::move(out));
}

namespace {

Image bilinear_resize(const Image& img, int out_h, int out_w) {
  const int h = img.height(), w = img.width(), c = img.channels();
  if (out_h == h && out_w == w) return img;
  const double sy = static_cast<double>(h) / out_h;
  const double sx = static_cast<double>(w) / out_w;
  std::vector<double> out(static_cast<std::size_t>(out_h) * out_w * c);
  for (int y = 0; y < out_h; ++y) {
    const double fy = std::clamp((y + 0.5) * sy - 0.5, 0.0, static_cast<double>(h - 1));
    const int y0 = static_cast<int>(fy);
    const int y1 = std::min(y0 + 1, h - 1);
    const double ay = fy - y0;
    for (int x = 0; x < out_w; ++x) {
      const double fx = std::clamp((x + 0.5) * sx - 0.5, 0.0, static_cast<double>(w - 1));
      const int x0 = static_cast<int>(fx);
      const int x1 = std::min(x0 + 1, w - 1);
      const double ax = fx - x0;
      for (int ch = 0; ch < c; ++ch) {
        const double top = (1 - ax) * img.at(y0, x0, ch) + ax * img.at(y0, x1, ch);
        const double bottom = (1 - ax) * img.at(y1, x0, ch) + ax * img.at(y1, x1, ch);
        out[(static_cast<std::size_t>(y) * out_w + x) * c + ch] = (1 - ay) * top + ay * bottom;
      }
    }
  }
  return Image::clipped(out_h, out_w, c, img.range(), std::move(out));
}

}  // namespace

Image downsample(const Image& img, double factor) {
  if (!(factor >= 1.0)) throw InvalidArgument("downsample: factor must be >= 1");
  if (factor == 1.0) return img;
  const int out_h = static_cast<int>(std::lround(img.height() / factor));
  const int out_w = static_cast<int>(std::lround(img.width() / factor));
  if (out_h < 4 || out_w < 4) {
    throw InvalidArgument("downsample: target " + std::to_string(out_h) + "x" +
                          std::to_string(out_w) + " is smaller than 4 pixels");
  }
  return bilinear_resize(img, out_h, out_w);
}

Image upsample_to(const Image& img, int height, int width) {
  if (height < img.height() || width < img.width()) {
    throw InvalidArgument("upsample_to: target smaller than source");
  }
  return bilinear_resize(img, height, width);
}

Image resample(const Image& img, double factor, Direction direction,
               std::optional<std::pair<int, int>> original) {
  if (!(factor >= 1.0)) throw InvalidArgument("resample: factor must be >= 1");
  if (direction == Direction::down) return downsample(img, factor);
  if (!original) {
    if (factor == 1.0) return img;
    throw InvalidArgument("resample: upsampling needs the original size");
  }
  return upsample_to(img, original->first, original->second);
}

std::vector<double> gaussian_noise(std::size_t count, double delta, ValueRange range,
                                   std::uint64_t seed) {
  if (!(delta >= 0.0)) throw InvalidArgument("gaussian_noise: delta must be >= 0");
  std::vector<double> out(count, 0.0);
  if (delta == 0.0) return out;
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> dist(0.0, delta / 255.0 * range_width(range));
  for (double& v : out) v = dist(rng);
  return out;
}

Image add_gaussian_noise(const Image& img, double delta, std::uint64_t seed) {
  if (!(delta >= 0.0)) throw InvalidArgument("add_gaussian_noise: delta must be >= 0");
  if (delta == 0.0) return img;
  const auto noise = gaussian_noise(img.size(), delta, img.range(), seed);
  std::vector<double> out(img.pixels().begin(), img.pixels().end());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] += noise[i];
  return Image::clipped(img.height(), img.width(), img.channels(), img.range(), std::move(out));
}

Image jpeg_roundtrip(const Image& img, int quality) {
  const Bytes encoded = encode_jpeg(img, quality);
  return decode_image(encoded, img.range());
}

Image degrade_in_order(const Image& hq, const DegradationParams& params, std::uint64_t seed,
                       std::span<const Stage> order) {
  if (hq.range() != ValueRange::unit) throw InvalidArgument("degrade: input must be unit range");
  const std::pair<int, int> original{hq.height(), hq.width()};
  Image current = hq;
  for (Stage stage : order) {
    switch (stage) {
      case Stage::blur:
        current = gaussian_blur(current, params.sigma);
        break;
      case Stage::down:
        current = downsample(current, params.scale);
        break;
      case Stage::noise:
        current = add_gaussian_noise(current, params.noise, seed);
        break;
      case Stage::jpeg:
        if (params.quality) current = jpeg_roundtrip(current, *params.quality);
        break;
      case Stage::up:
        current = upsample_to(current, original.first, original.second);
        break;
    }
  }
  return current;
}

Image degrade(const Image& hq, const DegradationParams& params, std::uint64_t seed) {
  return degrade_in_order(hq, params, seed, kPipelineOrder);
}

namespace {

double draw(std::mt19937_64& rng, Interval iv, const char* name) {
  if (!(iv.lo <= iv.hi)) throw InvalidArgument(std::string("inverted interval for ") + name);
  std::uniform_real_distribution<double> dist(0.0, 1.0);
  const double u = dist(rng);
  return iv.lo == iv.hi ? iv.lo : iv.lo + (iv.hi - iv.lo) * u;
}

}  // namespace

DegradationParams sample_params(std::uint64_t seed, const DegradationRanges& ranges) {
  if (ranges.sigma.lo < 0 || ranges.scale.lo < 1 || ranges.noise.lo < 0 || ranges.quality.lo < 1 ||
      ranges.quality.hi > 100) {
    throw InvalidArgument("sample_params: interval outside the valid domain");
  }
  std::mt19937_64 rng(seed);
  DegradationParams p;
  p.sigma = draw(rng, ranges.sigma, "sigma");
  p.scale = draw(rng, ranges.scale, "scale");
  p.noise = draw(rng, ranges.noise, "noise");
  if (!(ranges.quality.lo <= ranges.quality.hi)) throw InvalidArgument("inverted interval for quality");
  const auto qlo = static_cast<int>(std::ceil(ranges.quality.lo));
  const auto qhi = static_cast<int>(std::floor(ranges.quality.hi));
  std::uniform_int_distribution<int> qdist(qlo, qhi);
  p.quality = qdist(rng);
  return p;
}

void write_manifest(const std::filesystem::path& manifest, const std::filesystem::path& sidecar,
                    std::span<const ManifestEntry> entries) {
  std::ofstream list(manifest, std::ios::trunc);
  if (!list) throw IoError("cannot write " + manifest.string());
  nlohmann::ordered_json pairs = nlohmann::ordered_json::array();
  for (const auto& e : entries) {
    list << e.hq_path.generic_string() << '\t' << e.lq_path.generic_string() << '\n';
    nlohmann::ordered_json item;
    item["hq"] = e.hq_path.generic_string();
    item["lq"] = e.lq_path.generic_string();
    item["sigma"] = e.params.sigma;
    item["r"] = e.params.scale;
    item["delta"] = e.params.noise;
    item["q"] = e.params.quality ? nlohmann::ordered_json(*e.params.quality) : nlohmann::ordered_json();
    item["seed"] = e.seed;
    pairs.push_back(std::move(item));
  }
  nlohmann::ordered_json doc;
  doc["version"] = 1;
  doc["pairs"] = std::move(pairs);
  std::ofstream side(sidecar, std::ios::trunc);
  if (!side) throw IoError("cannot write " + sidecar.string());
  side << doc.dump(2) << '\n';
}

std::vector<ManifestEntry> read_sidecar(const std::filesystem::path& sidecar) {
  std::ifstream in(sidecar);
  if (!in) throw FileNotFound("no such file: " + sidecar.string());
  nlohmann::json doc;
  try {
    doc = nlohmann::json::parse(in);
  } catch (const nlohmann::json::exception& e) {
    throw CorruptData(sidecar.string() + ": " + e.what());
  }
  std::vector<ManifestEntry> out;
  for (const auto& item : doc.at("pairs")) {
    ManifestEntry e;
    e.hq_path = item.at("hq").get<std::string>();
    e.lq_path = item.at("lq").get<std::string>();
    e.params.sigma = item.at("sigma").get<double>();
    e.params.scale = item.at("r").get<double>();
    e.params.noise = item.at("delta").get<double>();
    if (!item.at("q").is_null()) e.params.quality = item.at("q").get<int>();
    e.seed = item.at("seed").get<std::uint64_t>();
    out.push_back(std::move(e));
  }
  return out;
}

}  // namespace facefuse::degrade
