#include "facefuse/image.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "facefuse/error.hpp"

namespace facefuse {

std::string_view to_string(ValueRange range) {
  return range == ValueRange::unit ? "unit" : "signed";
}

ValueRange parse_value_range(std::string_view text) {
  if (text == "unit") return ValueRange::unit;
  if (text == "signed") return ValueRange::signed_unit;
  throw InvalidArgument("unknown value range '" + std::string(text) + "'");
}

namespace {

void check_dims(int height, int width, int channels) {
  if (height < kMinImageSide || width < kMinImageSide) {
    throw InvalidArgument("image must be at least 8x8, got " + std::to_string(height) + "x" +
                          std::to_string(width));
  }
  if (channels != 1 && channels != 3) {
    throw InvalidArgument("image must have 1 or 3 channels, got " + std::to_string(channels));
  }
}

}  // namespace

Image::Image(int height, int width, int channels, ValueRange range, std::vector<double> pixels)
    : height_(height), width_(width), channels_(channels), range_(range), pixels_(std::move(pixels)) {
  check_dims(height, width, channels);
  if (pixels_.size() != static_cast<std::size_t>(height) * width * channels) {
    throw ShapeMismatch("pixel buffer size does not match image dimensions");
  }
  const double lo = range_min(range);
  const double hi = range_max(range);
  for (double v : pixels_) {
    if (!(v >= lo && v <= hi)) {
      throw RangeViolation("pixel value " + std::to_string(v) + " outside " +
                           std::string(to_string(range)) + " range");
    }
  }
}

Image Image::filled(int height, int width, int channels, ValueRange range, double value) {
  return Image(height, width, channels, range,
               std::vector<double>(static_cast<std::size_t>(height) * width * channels, value));
}

Image Image::clipped(int height, int width, int channels, ValueRange range,
                     std::vector<double> pixels) {
  const double lo = range_min(range);
  const double hi = range_max(range);
  for (double& v : pixels) {
    if (std::isnan(v)) throw RangeViolation("NaN pixel value");
    v = std::clamp(v, lo, hi);
  }
  return Image(height, width, channels, range, std::move(pixels));
}

Image convert_range(const Image& img, ValueRange target) {
  if (img.range() == target) return img;
  std::vector<double> out(img.pixels().begin(), img.pixels().end());
  if (target == ValueRange::signed_unit) {
    for (double& v : out) v = 2.0 * v - 1.0;
  } else {
    for (double& v : out) v = (v + 1.0) / 2.0;
  }
  return Image::clipped(img.height(), img.width(), img.channels(), target, std::move(out));
}

Image to_grayscale(const Image& img) {
  if (img.channels() == 1) return img;
  std::vector<double> out(static_cast<std::size_t>(img.height()) * img.width());
  for (int y = 0; y < img.height(); ++y) {
    for (int x = 0; x < img.width(); ++x) {
      out[static_cast<std::size_t>(y) * img.width() + x] =
          0.299 * img.at(y, x, 0) + 0.587 * img.at(y, x, 1) + 0.114 * img.at(y, x, 2);
    }
  }
  return Image::clipped(img.height(), img.width(), 1, img.range(), std::move(out));
}

DeformationField::DeformationField(int height, int width, std::vector<double> displacements)
    : height_(height), width_(width), values_(std::move(displacements)) {
  if (height <= 0 || width <= 0) throw InvalidArgument("field dimensions must be positive");
  if (values_.size() != static_cast<std::size_t>(height) * width * 2) {
    throw ShapeMismatch("displacement buffer size does not match field dimensions");
  }
  for (double v : values_) {
    if (!std::isfinite(v)) throw RangeViolation("non-finite displacement");
  }
}

DeformationField DeformationField::zeros(int height, int width) {
  return DeformationField(height, width,
                          std::vector<double>(static_cast<std::size_t>(height) * width * 2, 0.0));
}

double DeformationField::max_magnitude() const {
  double best = 0.0;
  for (std::size_t i = 0; i < values_.size(); i += 2) {
    best = std::max(best, std::hypot(values_[i], values_[i + 1]));
  }
  return best;
}

DeformationField DeformationField::scaled(double factor) const {
  std::vector<double> out(values_);
  for (double& v : out) v *= factor;
  return DeformationField(height_, width_, std::move(out));
}

double endpoint_error(const DeformationField& a, const DeformationField& b) {
  if (a.height() != b.height() || a.width() != b.width()) {
    throw ShapeMismatch("endpoint_error: field shapes differ");
  }
  const auto va = a.values();
  const auto vb = b.values();
  double total = 0.0;
  for (std::size_t i = 0; i < va.size(); i += 2) {
    total += std::hypot(va[i] - vb[i], va[i + 1] - vb[i + 1]);
  }
  return total / static_cast<double>(va.size() / 2);
}

SemanticMask::SemanticMask(int height, int width, std::vector<std::uint8_t> values)
    : height_(height), width_(width), values_(std::move(values)) {
  if (height <= 0 || width <= 0) throw InvalidArgument("mask dimensions must be positive");
  if (values_.size() != static_cast<std::size_t>(height) * width) {
    throw ShapeMismatch("mask buffer size does not match dimensions");
  }
  for (auto v : values_) {
    if (v > 1) throw RangeViolation("semantic mask values must be 0 or 1");
  }
}

SemanticMask SemanticMask::constant(int height, int width, bool on) {
  return SemanticMask(height, width,
                      std::vector<std::uint8_t>(static_cast<std::size_t>(height) * width, on ? 1 : 0));
}

double SemanticMask::coverage() const {
  std::size_t on = 0;
  for (auto v : values_) on += v;
  return static_cast<double>(on) / static_cast<double>(values_.size());
}

FeatureMap::FeatureMap(int height, int width, int depth, std::vector<double> values)
    : height_(height), width_(width), depth_(depth), values_(std::move(values)) {
  if (height <= 0 || width <= 0 || depth <= 0) {
    throw InvalidArgument("feature map dimensions must be positive");
  }
  if (values_.size() != static_cast<std::size_t>(height) * width * depth) {
    throw ShapeMismatch("feature buffer size does not match dimensions");
  }
  for (double v : values_) {
    if (!std::isfinite(v)) throw RangeViolation("non-finite feature value");
  }
}

FeatureMap FeatureMap::filled(int height, int width, int depth, double value) {
  return FeatureMap(height, width, depth,
                    std::vector<double>(static_cast<std::size_t>(height) * width * depth, value));
}

}  // namespace facefuse
