#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <vector>

#include "facefuse/image.hpp"

// Synthetic LQ generation: blur -> downsample -> noise -> JPEG -> upsample.
namespace facefuse::degrade {

struct DegradationParams {
  double sigma = 0.0;          // Gaussian blur std, pixels
  double scale = 1.0;          // downsample factor r >= 1
  double noise = 0.0;          // noise std on the 0..255 scale
  std::optional<int> quality;  // JPEG quality; absent skips compression

  friend bool operator==(const DegradationParams&, const DegradationParams&) = default;
};

struct Interval {
  double lo;
  double hi;
  friend bool operator==(const Interval&, const Interval&) = default;
};

struct DegradationRanges {
  Interval sigma{1.0, 15.0};
  Interval scale{1.0, 6.0};
  Interval noise{0.0, 25.0};
  Interval quality{30.0, 90.0};  // integer endpoints, inclusive
  friend bool operator==(const DegradationRanges&, const DegradationRanges&) = default;
};

std::vector<double> gaussian_kernel(double sigma);
// Separable Gaussian, 2*ceil(3*sigma)+1 taps, reflect-101 borders. sigma == 0 is a copy.
Image gaussian_blur(const Image& img, double sigma);

enum class Direction { down, up };

// Bilinear, half-pixel centres. Down targets round(H/f) x round(W/f).
Image downsample(const Image& img, double factor);
Image upsample_to(const Image& img, int height, int width);
// `original` is the H x W recorded before downsampling; required for Direction::up.
Image resample(const Image& img, double factor, Direction direction,
               std::optional<std::pair<int, int>> original = std::nullopt);

// i.i.d. N(0, (delta/255 * range width)^2) samples in raster order.
std::vector<double> gaussian_noise(std::size_t count, double delta, ValueRange range,
                                   std::uint64_t seed);
Image add_gaussian_noise(const Image& img, double delta, std::uint64_t seed);

Image jpeg_roundtrip(const Image& img, int quality);

enum class Stage { blur, down, noise, jpeg, up };
inline constexpr Stage kPipelineOrder[] = {Stage::blur, Stage::down, Stage::noise, Stage::jpeg,
                                           Stage::up};

Image degrade(const Image& hq, const DegradationParams& params, std::uint64_t seed);
// Same stages in a caller-chosen order. Used to guard the canonical ordering.
Image degrade_in_order(const Image& hq, const DegradationParams& params, std::uint64_t seed,
                       std::span<const Stage> order);

DegradationParams sample_params(std::uint64_t seed, const DegradationRanges& ranges = {});

struct ManifestEntry {
  std::filesystem::path hq_path;
  std::filesystem::path lq_path;
  DegradationParams params;
  std::uint64_t seed = 0;
};

// "hq<TAB>lq" per line, plus a JSON sidecar holding the sampled parameters.
void write_manifest(const std::filesystem::path& manifest, const std::filesystem::path& sidecar,
                    std::span<const ManifestEntry> entries);
std::vector<ManifestEntry> read_sidecar(const std::filesystem::path& sidecar);

}  // namespace facefuse::degrade
