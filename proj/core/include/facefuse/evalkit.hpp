#pragma once

#include <filesystem>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "facefuse/image.hpp"
#include "facefuse/metric.hpp"

// Full-reference metrics, landmark distance and report generation.
namespace facefuse::evalkit {

inline constexpr double kPsnrCap = 100.0;
inline constexpr int kSsimWindow = 11;
inline constexpr double kSsimSigma = 1.5;

// 10 log10(1 / MSE) over unit-range values; identical images give the 100 dB cap.
double psnr(const Image& ref, const Image& test);
// Single-scale SSIM on luma, 11x11 Gaussian window (sigma 1.5), K1 0.01, K2 0.03, L 1.
// Statistics are taken over windows fully inside the image.
double ssim(const Image& ref, const Image& test);
double lmd(const metric::Landmarks& ref, const metric::Landmarks& test);

struct ImageScores {
  std::string name;
  double psnr = 0.0;
  double ssim = 0.0;
  std::optional<double> lmd;
};

struct Aggregates {
  double psnr = 0.0;
  double ssim = 0.0;
  std::optional<double> lmd;
  // Hook-point scores (FID, NIQE, LPIPS, ...) supplied by external providers.
  std::vector<std::pair<std::string, double>> extra;
};

struct MetricReport {
  std::vector<ImageScores> images;
  Aggregates aggregates;
  std::string config_hash;
};

// Scalar provider for a metric that needs a pretrained model; receives the
// reference and test directories.
struct MetricHook {
  std::string name;
  std::function<double(const std::filesystem::path&, const std::filesystem::path&)> score;
};

struct EvaluateOptions {
  // Holds ref/<name>.txt and test/<name>.txt five-point files.
  std::optional<std::filesystem::path> landmarks;
  std::vector<MetricHook> hooks;
  std::string config_hash;
};

// Compares <name>.png files present in both directories. Files present in only
// one directory raise CorruptData naming every unmatched file.
MetricReport evaluate_dir(const std::filesystem::path& ref_dir,
                          const std::filesystem::path& test_dir,
                          const EvaluateOptions& options = {});

MetricReport aggregate(std::vector<ImageScores> images, std::string config_hash = {});

std::string report_json(const MetricReport& report);
MetricReport report_from_json(const std::string& text);
// Aligned plain-text table: one row per image plus a mean row.
std::string report_table(const MetricReport& report);

}  // namespace facefuse::evalkit
