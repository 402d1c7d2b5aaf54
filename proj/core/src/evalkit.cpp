#include "facefuse/evalkit.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <set>

#include <json.hpp>

#include "facefuse/degrade.hpp"
#include "facefuse/error.hpp"
#include "facefuse/image_io.hpp"

namespace facefuse::evalkit {

namespace fs = std::filesystem;

namespace {

void require_same_shape(const Image& a, const Image& b, const char* op) {
  if (!a.same_shape(b)) throw ShapeMismatch(std::string(op) + ": image shapes differ");
}

}  // namespace

double psnr(const Image& ref, const Image& test) {
  require_same_shape(ref, test, "psnr");
  const Image a = convert_range(ref, ValueRange::unit);
  const Image b = convert_range(test, ValueRange::unit);
  double sum = 0.0;
  const auto pa = a.pixels();
  const auto pb = b.pixels();
  for (std::size_t i = 0; i < pa.size(); ++i) {
    const double d = pa[i] - pb[i];
    sum += d * d;
  }
  const double mse = sum / static_cast<double>(pa.size());
  if (mse == 0.0) return kPsnrCap;
  return std::min(kPsnrCap, 10.0 * std::log10(1.0 / mse));
}

double ssim(const Image& ref, const Image& test) {
  require_same_shape(ref, test, "ssim");
  if (ref.height() < kSsimWindow || ref.width() < kSsimWindow) {
    throw InvalidArgument("ssim: image smaller than the 11x11 window");
  }
  const Image a = to_grayscale(convert_range(ref, ValueRange::unit));
  const Image b = to_grayscale(convert_range(test, ValueRange::unit));
  const auto k1d = degrade::gaussian_kernel(kSsimSigma);
  // gaussian_kernel spans 2*ceil(3 sigma)+1 taps; SSIM uses the central 11, renormalized.
  const int r = kSsimWindow / 2;
  const int c0 = static_cast<int>(k1d.size()) / 2;
  std::vector<double> k(kSsimWindow);
  double ksum = 0.0;
  for (int i = -r; i <= r; ++i) {
    k[i + r] = k1d[c0 + i];
    ksum += k[i + r];
  }
  for (double& v : k) v /= ksum;

  constexpr double C1 = 0.01 * 0.01;
  constexpr double C2 = 0.03 * 0.03;
  const int h = a.height();
  const int w = a.width();
  double total = 0.0;
  long count = 0;
  for (int y = r; y < h - r; ++y) {
    for (int x = r; x < w - r; ++x) {
      double mx = 0, my = 0, sxx = 0, syy = 0, sxy = 0;
      for (int dy = -r; dy <= r; ++dy) {
        for (int dx = -r; dx <= r; ++dx) {
          const double wt = k[dy + r] * k[dx + r];
          const double u = a.at(y + dy, x + dx);
          const double v = b.at(y + dy, x + dx);
          mx += wt * u;
          my += wt * v;
          sxx += wt * u * u;
          syy += wt * v * v;
          sxy += wt * u * v;
        }
      }
      const double vx = sxx - mx * mx;
      const double vy = syy - my * my;
      const double cxy = sxy - mx * my;
      total += ((2 * mx * my + C1) * (2 * cxy + C2)) / ((mx * mx + my * my + C1) * (vx + vy + C2));
      ++count;
    }
  }
  return total / static_cast<double>(count);
}

double lmd(const metric::Landmarks& ref, const metric::Landmarks& test) {
  if (ref.size() != test.size()) {
    throw ShapeMismatch("lmd: " + std::to_string(ref.size()) + " vs " +
                        std::to_string(test.size()) + " landmarks");
  }
  if (ref.empty()) throw InvalidArgument("lmd: empty landmark lists");
  double sum = 0.0;
  for (std::size_t i = 0; i < ref.size(); ++i) {
    sum += std::hypot(ref[i].x - test[i].x, ref[i].y - test[i].y);
  }
  return sum / static_cast<double>(ref.size());
}

MetricReport aggregate(std::vector<ImageScores> images, std::string config_hash) {
  if (images.empty()) throw InvalidArgument("aggregate: no images");
  MetricReport report;
  double p = 0.0, s = 0.0, l = 0.0;
  int with_lmd = 0;
  for (const auto& row : images) {
    p += row.psnr;
    s += row.ssim;
    if (row.lmd) {
      l += *row.lmd;
      ++with_lmd;
    }
  }
  const double n = static_cast<double>(images.size());
  report.aggregates.psnr = p / n;
  report.aggregates.ssim = s / n;
  if (with_lmd > 0) report.aggregates.lmd = l / with_lmd;
  report.images = std::move(images);
  report.config_hash = std::move(config_hash);
  return report;
}

namespace {

std::set<std::string> png_stems(const fs::path& dir) {
  if (!fs::is_directory(dir)) throw FileNotFound("no such directory: " + dir.string());
  std::set<std::string> out;
  for (const auto& e : fs::directory_iterator(dir)) {
    if (e.is_regular_file() && e.path().extension() == ".png") out.insert(e.path().stem().string());
  }
  return out;
}

}  // namespace

MetricReport evaluate_dir(const fs::path& ref_dir, const fs::path& test_dir,
                          const EvaluateOptions& options) {
  const auto ref = png_stems(ref_dir);
  const auto test = png_stems(test_dir);
  std::vector<std::string> unmatched;
  for (const auto& n : ref) {
    if (!test.contains(n)) unmatched.push_back(n + ".png (reference only)");
  }
  for (const auto& n : test) {
    if (!ref.contains(n)) unmatched.push_back(n + ".png (test only)");
  }
  if (!unmatched.empty()) {
    std::string list;
    for (const auto& u : unmatched) list += (list.empty() ? "" : ", ") + u;
    throw CorruptData("unmatched files: " + list);
  }
  if (ref.empty()) throw CorruptData("no images to compare in " + ref_dir.string());
  std::vector<ImageScores> rows;
  for (const auto& name : ref) {
    const Image a = load_image(ref_dir / (name + ".png"), ValueRange::unit);
    const Image b = load_image(test_dir / (name + ".png"), ValueRange::unit);
    ImageScores row{name, psnr(a, b), ssim(a, b), std::nullopt};
    if (options.landmarks) {
      const auto lr = *options.landmarks / "ref" / (name + ".txt");
      const auto lt = *options.landmarks / "test" / (name + ".txt");
      if (fs::exists(lr) && fs::exists(lt)) {
        row.lmd = lmd(metric::load_landmarks(lr), metric::load_landmarks(lt));
      }
    }
    rows.push_back(std::move(row));
  }
  MetricReport report = aggregate(std::move(rows), options.config_hash);
  for (const auto& hook : options.hooks) {
    report.aggregates.extra.emplace_back(hook.name, hook.score(ref_dir, test_dir));
  }
  return report;
}

std::string report_json(const MetricReport& report) {
  using nlohmann::ordered_json;
  ordered_json images = ordered_json::array();
  for (const auto& row : report.images) {
    images.push_back({{"name", row.name},
                      {"psnr", row.psnr},
                      {"ssim", row.ssim},
                      {"lmd", row.lmd ? ordered_json(*row.lmd) : ordered_json(nullptr)}});
  }
  ordered_json agg = {{"psnr", report.aggregates.psnr},
                      {"ssim", report.aggregates.ssim},
                      {"lmd", report.aggregates.lmd ? ordered_json(*report.aggregates.lmd)
                                                    : ordered_json(nullptr)}};
  for (const auto& [name, value] : report.aggregates.extra) agg[name] = value;
  ordered_json j = {{"images", images}, {"aggregates", agg}, {"config_hash", report.config_hash}};
  return j.dump(2);
}

MetricReport report_from_json(const std::string& text) {
  using nlohmann::ordered_json;
  try {
    const auto j = ordered_json::parse(text);
    MetricReport r;
    for (const auto& row : j.at("images")) {
      ImageScores s{row.at("name").get<std::string>(), row.at("psnr").get<double>(),
                    row.at("ssim").get<double>(), std::nullopt};
      if (!row.at("lmd").is_null()) s.lmd = row.at("lmd").get<double>();
      r.images.push_back(std::move(s));
    }
    const auto& a = j.at("aggregates");
    r.aggregates.psnr = a.at("psnr").get<double>();
    r.aggregates.ssim = a.at("ssim").get<double>();
    if (!a.at("lmd").is_null()) r.aggregates.lmd = a.at("lmd").get<double>();
    for (const auto& [key, value] : a.items()) {
      if (key != "psnr" && key != "ssim" && key != "lmd") {
        r.aggregates.extra.emplace_back(key, value.get<double>());
      }
    }
    r.config_hash = j.at("config_hash").get<std::string>();
    return r;
  } catch (const nlohmann::json::exception& e) {
    throw CorruptData(std::string("malformed metric report: ") + e.what());
  }
}

std::string report_table(const MetricReport& report) {
  std::size_t name_w = 5;
  for (const auto& row : report.images) name_w = std::max(name_w, row.name.size());
  std::string out;
  char buf[256];
  auto lmd_text = [](const std::optional<double>& v) {
    char b[32];
    if (!v) return std::string("-");
    std::snprintf(b, sizeof b, "%.3f", *v);
    return std::string(b);
  };
  std::snprintf(buf, sizeof buf, "%-*s  %9s  %7s  %8s\n", static_cast<int>(name_w), "Image",
                "PSNR(dB)", "SSIM", "LMD(px)");
  out += buf;
  out += std::string(name_w + 2 + 9 + 2 + 7 + 2 + 8, '-') + "\n";
  for (const auto& row : report.images) {
    std::snprintf(buf, sizeof buf, "%-*s  %9.3f  %7.4f  %8s\n", static_cast<int>(name_w),
                  row.name.c_str(), row.psnr, row.ssim, lmd_text(row.lmd).c_str());
    out += buf;
  }
  out += std::string(name_w + 2 + 9 + 2 + 7 + 2 + 8, '-') + "\n";
  std::snprintf(buf, sizeof buf, "%-*s  %9.3f  %7.4f  %8s\n", static_cast<int>(name_w), "mean",
                report.aggregates.psnr, report.aggregates.ssim,
                lmd_text(report.aggregates.lmd).c_str());
  out += buf;
  for (const auto& [name, value] : report.aggregates.extra) {
    std::snprintf(buf, sizeof buf, "%s: %.4f\n", name.c_str(), value);
    out += buf;
  }
  return out;
}

}  // namespace facefuse::evalkit
