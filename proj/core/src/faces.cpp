#include "facefuse/faces.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <random>

#include "facefuse/degrade.hpp"
#include "facefuse/error.hpp"

namespace facefuse::faces {

namespace {

using Color = std::array<double, 3>;

class Canvas {
 public:
  Canvas(int h, int w) : h_(h), w_(w), px_(static_cast<std::size_t>(h) * w * 3, 0.0) {}

  int height() const { return h_; }
  int width() const { return w_; }
  double* at(int y, int x) { return &px_[(static_cast<std::size_t>(y) * w_ + x) * 3]; }

  void blend(int y, int x, const Color& c, double alpha) {
    if (alpha <= 0.0) return;
    alpha = std::min(alpha, 1.0);
    double* p = at(y, x);
    for (int k = 0; k < 3; ++k) p[k] += alpha * (c[k] - p[k]);
  }

  // Anti-aliased ellipse; `shade(nx, ny)` gets normalized ellipse coordinates.
  template <typename Shade>
  void ellipse(double cx, double cy, double rx, double ry, double alpha, Shade shade) {
    const int y0 = std::max(0, static_cast<int>(std::floor(cy - ry - 1)));
    const int y1 = std::min(h_ - 1, static_cast<int>(std::ceil(cy + ry + 1)));
    const int x0 = std::max(0, static_cast<int>(std::floor(cx - rx - 1)));
    const int x1 = std::min(w_ - 1, static_cast<int>(std::ceil(cx + rx + 1)));
    const double r_min = std::min(rx, ry);
    for (int y = y0; y <= y1; ++y) {
      for (int x = x0; x <= x1; ++x) {
        const double nx = (x - cx) / rx;
        const double ny = (y - cy) / ry;
        const double dist = (std::sqrt(nx * nx + ny * ny) - 1.0) * r_min;
        const double cover = std::clamp(0.5 - dist, 0.0, 1.0);
        if (cover > 0.0) blend(y, x, shade(nx, ny), alpha * cover);
      }
    }
  }

  void ellipse(double cx, double cy, double rx, double ry, const Color& c, double alpha = 1.0) {
    ellipse(cx, cy, rx, ry, alpha, [&c](double, double) { return c; });
  }

  // Anti-aliased thick segment.
  void segment(double ax, double ay, double bx, double by, double half_width, const Color& c) {
    const double dx = bx - ax;
    const double dy = by - ay;
    const double len2 = std::max(dx * dx + dy * dy, 1e-12);
    const int y0 = std::max(0, static_cast<int>(std::floor(std::min(ay, by) - half_width - 1)));
    const int y1 = std::min(h_ - 1, static_cast<int>(std::ceil(std::max(ay, by) + half_width + 1)));
    const int x0 = std::max(0, static_cast<int>(std::floor(std::min(ax, bx) - half_width - 1)));
    const int x1 = std::min(w_ - 1, static_cast<int>(std::ceil(std::max(ax, bx) + half_width + 1)));
    for (int y = y0; y <= y1; ++y) {
      for (int x = x0; x <= x1; ++x) {
        const double t = std::clamp(((x - ax) * dx + (y - ay) * dy) / len2, 0.0, 1.0);
        const double d = std::hypot(x - (ax + t * dx), y - (ay + t * dy)) - half_width;
        blend(y, x, c, std::clamp(0.5 - d, 0.0, 1.0));
      }
    }
  }

  Image finish() const { return Image::clipped(h_, w_, 3, ValueRange::unit, px_); }

 private:
  int h_;
  int w_;
  std::vector<double> px_;
};

Color jitter(const Color& base, double amount, std::mt19937_64& rng) {
  std::uniform_real_distribution<double> u(-amount, amount);
  Color c{};
  for (int k = 0; k < 3; ++k) c[k] = std::clamp(base[k] + u(rng), 0.0, 1.0);
  return c;
}

Color scaled(const Color& c, double f) { return {c[0] * f, c[1] * f, c[2] * f}; }

}  // namespace

FaceSample synth_face(int height, int width, std::uint64_t seed) {
  if (height < 16 || width < 16) throw InvalidArgument("synth_face: sides must be >= 16");
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u01(0.0, 1.0);
  auto uni = [&](double lo, double hi) { return lo + (hi - lo) * u01(rng); };
  const double H = height;
  const double W = width;
  Canvas cv(height, width);

  // Background: two-colour vertical gradient with soft blotches.
  const Color bg_top = jitter({0.55, 0.6, 0.65}, 0.35, rng);
  const Color bg_bottom = jitter({0.35, 0.35, 0.4}, 0.3, rng);
  for (int y = 0; y < height; ++y) {
    const double t = y / (H - 1);
    for (int x = 0; x < width; ++x) {
      double* p = cv.at(y, x);
      for (int k = 0; k < 3; ++k) p[k] = (1 - t) * bg_top[k] + t * bg_bottom[k];
    }
  }
  for (int i = 0; i < 4; ++i) {
    cv.ellipse(uni(0, W), uni(0, H), uni(0.1, 0.3) * W, uni(0.1, 0.3) * H,
               jitter({0.5, 0.5, 0.5}, 0.4, rng), 0.35);
  }

  const double cx = W * uni(0.46, 0.54);
  const double cy = H * uni(0.5, 0.56);
  const double face_rx = W * uni(0.26, 0.32);
  const double face_ry = H * uni(0.33, 0.39);

  // Hair with strand texture.
  const Color hair = jitter({0.2, 0.15, 0.1}, 0.15, rng);
  const double strand_freq = uni(0.9, 1.6);
  const double strand_phase = uni(0, 6.28);
  cv.ellipse(cx, cy - 0.18 * face_ry, face_rx * 1.18, face_ry * 1.05, 1.0,
             [&](double nx, double ny) {
               const double s = 0.5 + 0.5 * std::sin(strand_freq * (nx * 0.5 * W) + 3.0 * ny +
                                                     strand_phase);
               return scaled(hair, 0.7 + 0.6 * s);
             });

  // Face with radial shading.
  const Color skin = jitter({0.85, 0.66, 0.55}, 0.12, rng);
  cv.ellipse(cx, cy, face_rx, face_ry, 1.0, [&](double nx, double ny) {
    const double r2 = nx * nx + ny * ny;
    return scaled(skin, 1.05 - 0.3 * r2 + 0.05 * nx);
  });

  // Facial components.
  const double eye_dx = face_rx * uni(0.36, 0.44);
  const double eye_y = cy - face_ry * uni(0.12, 0.2);
  const double eye_rx = face_rx * uni(0.16, 0.2);
  const double eye_ry = eye_rx * uni(0.45, 0.6);
  const Color iris = jitter({0.3, 0.35, 0.3}, 0.25, rng);
  const Color brow = scaled(hair, 0.8);
  metric::Landmarks lm(metric::kLandmarkCount);
  for (int side = 0; side < 2; ++side) {
    const double ex = cx + (side == 0 ? -eye_dx : eye_dx);
    lm[side] = {ex, eye_y};
    cv.ellipse(ex, eye_y, eye_rx, eye_ry, {0.95, 0.95, 0.93});
    cv.ellipse(ex, eye_y, eye_ry * 0.9, eye_ry * 0.9, iris);
    cv.ellipse(ex, eye_y, eye_ry * 0.4, eye_ry * 0.4, {0.03, 0.03, 0.03});
    cv.ellipse(ex - eye_ry * 0.3, eye_y - eye_ry * 0.3, eye_ry * 0.18, eye_ry * 0.18,
               {1.0, 1.0, 1.0});
    const double by = eye_y - eye_ry * uni(2.0, 2.6);
    cv.segment(ex - eye_rx, by + eye_ry * 0.5, ex + eye_rx, by, std::max(0.8, 0.06 * face_rx),
               brow);
  }

  const double nose_y = cy + face_ry * uni(0.08, 0.16);
  lm[2] = {cx, nose_y};
  const Color shadow = scaled(skin, 0.7);
  cv.segment(cx, eye_y + eye_ry, cx + face_rx * 0.05, nose_y - face_rx * 0.05,
             std::max(0.6, 0.03 * face_rx), shadow);
  const double nostril = face_rx * 0.07;
  cv.ellipse(cx - nostril * 1.3, nose_y, nostril, nostril * 0.6, scaled(skin, 0.45));
  cv.ellipse(cx + nostril * 1.3, nose_y, nostril, nostril * 0.6, scaled(skin, 0.45));

  const double mouth_y = cy + face_ry * uni(0.42, 0.5);
  const double mouth_half = face_rx * uni(0.32, 0.42);
  lm[3] = {cx - mouth_half, mouth_y};
  lm[4] = {cx + mouth_half, mouth_y};
  const Color lips = jitter({0.7, 0.3, 0.32}, 0.1, rng);
  cv.ellipse(cx, mouth_y, mouth_half, face_ry * uni(0.07, 0.1), 1.0, [&](double nx, double ny) {
    return scaled(lips, 0.9 + 0.15 * ny - 0.1 * nx * nx);
  });
  cv.segment(cx - mouth_half, mouth_y, cx + mouth_half, mouth_y, std::max(0.5, 0.02 * face_rx),
             scaled(lips, 0.4));

  // Fine grain plus mid-frequency mottling, both band-passed noise.
  std::normal_distribution<double> normal(0.0, 1.0);
  Image noise_img = [&] {
    std::vector<double> n(static_cast<std::size_t>(height) * width);
    for (double& v : n) v = 0.5 + 0.15 * normal(rng);
    return Image::clipped(height, width, 1, ValueRange::unit, std::move(n));
  }();
  const Image smooth = degrade::gaussian_blur(noise_img, 1.5);
  const Image mottle = degrade::gaussian_blur(noise_img, 3.0);
  const double grain = uni(0.05, 0.1);
  const double patchiness = uni(0.6, 1.0);
  for (int y = 0; y < height; ++y) {
    for (int x = 0; x < width; ++x) {
      const double g = grain * 2.0 * (noise_img.at(y, x) - smooth.at(y, x)) +
                       patchiness * 3.0 * (smooth.at(y, x) - mottle.at(y, x));
      double* p = cv.at(y, x);
      for (int k = 0; k < 3; ++k) p[k] += g;
    }
  }
  return {cv.finish(), std::move(lm)};
}

metric::Landmarks canonical_landmarks(int height, int width) {
  const double cx = 0.5 * width;
  const double cy = 0.53 * height;
  const double face_rx = 0.29 * width;
  const double face_ry = 0.36 * height;
  const double eye_dx = 0.4 * face_rx;
  const double eye_y = cy - 0.16 * face_ry;
  const double mouth_half = 0.37 * face_rx;
  const double mouth_y = cy + 0.46 * face_ry;
  return {{cx - eye_dx, eye_y},
          {cx + eye_dx, eye_y},
          {cx, cy + 0.12 * face_ry},
          {cx - mouth_half, mouth_y},
          {cx + mouth_half, mouth_y}};
}

std::vector<FaceSample> synth_faces(int count, int height, int width, std::uint64_t seed) {
  if (count < 0) throw InvalidArgument("synth_faces: count must be >= 0");
  std::vector<FaceSample> out;
  out.reserve(count);
  std::mt19937_64 seeds(seed);
  for (int i = 0; i < count; ++i) out.push_back(synth_face(height, width, seeds()));
  return out;
}

}  // namespace facefuse::faces
