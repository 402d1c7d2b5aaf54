#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <string_view>
#include <vector>

namespace facefuse {

// unit: [0, 1], used for files and metrics. signed_unit: [-1, 1], used inside networks.
enum class ValueRange { unit, signed_unit };
enum class ColorSpace { gray, rgb };

std::string_view to_string(ValueRange range);
ValueRange parse_value_range(std::string_view text);

inline double range_min(ValueRange r) { return r == ValueRange::unit ? 0.0 : -1.0; }
inline double range_max(ValueRange) { return 1.0; }

inline constexpr int kMinImageSide = 8;

// H x W x C raster, height-major then width then channel. Every value lies
// inside the declared range; constructors reject anything else.
class Image {
 public:
  Image(int height, int width, int channels, ValueRange range, std::vector<double> pixels);

  static Image filled(int height, int width, int channels, ValueRange range, double value);
  // Clips each value into `range` before construction.
  static Image clipped(int height, int width, int channels, ValueRange range,
                       std::vector<double> pixels);

  int height() const { return height_; }
  int width() const { return width_; }
  int channels() const { return channels_; }
  ValueRange range() const { return range_; }
  ColorSpace color_space() const { return channels_ == 3 ? ColorSpace::rgb : ColorSpace::gray; }
  std::size_t size() const { return pixels_.size(); }

  double at(int y, int x, int c = 0) const {
    return pixels_[(static_cast<std::size_t>(y) * width_ + x) * channels_ + c];
  }
  std::span<const double> pixels() const { return pixels_; }

  bool same_shape(const Image& other) const {
    return height_ == other.height_ && width_ == other.width_ && channels_ == other.channels_;
  }

  friend bool operator==(const Image&, const Image&) = default;

 private:
  int height_;
  int width_;
  int channels_;
  ValueRange range_;
  std::vector<double> pixels_;
};

// Affine remap between the two value ranges; identity when already in `target`.
Image convert_range(const Image& img, ValueRange target);
Image to_grayscale(const Image& img);

// Per-pixel displacement (dx, dy) in pixels, interleaved as H x W x 2.
class DeformationField {
 public:
  DeformationField(int height, int width, std::vector<double> displacements);
  static DeformationField zeros(int height, int width);

  int height() const { return height_; }
  int width() const { return width_; }
  double dx(int y, int x) const { return values_[(static_cast<std::size_t>(y) * width_ + x) * 2]; }
  double dy(int y, int x) const { return values_[(static_cast<std::size_t>(y) * width_ + x) * 2 + 1]; }
  std::span<const double> values() const { return values_; }

  double max_magnitude() const;
  DeformationField scaled(double factor) const;

  friend bool operator==(const DeformationField&, const DeformationField&) = default;

 private:
  int height_;
  int width_;
  std::vector<double> values_;
};

// Mean Euclidean distance between corresponding displacement vectors.
double endpoint_error(const DeformationField& a, const DeformationField& b);

// Binary map: 1 marks identity-critical facial components.
class SemanticMask {
 public:
  SemanticMask(int height, int width, std::vector<std::uint8_t> values);
  static SemanticMask constant(int height, int width, bool on);

  int height() const { return height_; }
  int width() const { return width_; }
  std::uint8_t at(int y, int x) const { return values_[static_cast<std::size_t>(y) * width_ + x]; }
  std::span<const std::uint8_t> values() const { return values_; }
  double coverage() const;

  friend bool operator==(const SemanticMask&, const SemanticMask&) = default;

 private:
  int height_;
  int width_;
  std::vector<std::uint8_t> values_;
};

// m x n x d activations, height-major then width then channel.
class FeatureMap {
 public:
  FeatureMap(int height, int width, int depth, std::vector<double> values);
  static FeatureMap filled(int height, int width, int depth, double value);

  int height() const { return height_; }
  int width() const { return width_; }
  int depth() const { return depth_; }
  double at(int y, int x, int c) const {
    return values_[(static_cast<std::size_t>(y) * width_ + x) * depth_ + c];
  }
  std::span<const double> values() const { return values_; }

  friend bool operator==(const FeatureMap&, const FeatureMap&) = default;

 private:
  int height_;
  int width_;
  int depth_;
  std::vector<double> values_;
};

}  // namespace facefuse
