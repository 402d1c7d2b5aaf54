#include "facefuse/nn/ops.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>

#include <Eigen/Core>

#include "facefuse/error.hpp"

namespace facefuse::nn {

namespace {

template <typename T>
using MatR = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
template <typename T>
using MapR = Eigen::Map<MatR<T>>;
template <typename T>
using CMapR = Eigen::Map<const MatR<T>>;

void require_same(const Shape& a, const Shape& b, const char* op) {
  if (!(a == b)) throw ShapeMismatch(std::string(op) + ": " + a.str() + " vs " + b.str());
}

template <typename T>
Tensor<T>* grad_of(Node<T>& self, std::size_t i) {
  auto& in = self.inputs[i];
  return in->requires_grad ? &in->grad_buffer() : nullptr;
}

template <typename T>
T stable_sigmoid(T z) {
  if (z >= 0) return T(1) / (T(1) + std::exp(-z));
  const T e = std::exp(z);
  return e / (T(1) + e);
}

template <typename T>
T stable_softplus(T z) {
  return std::max(z, T(0)) + std::log1p(std::exp(-std::abs(z)));
}

Shape scalar_shape() { return Shape{1, 1, 1, 1}; }

}  // namespace

// ---------------------------------------------------------------------------
// Elementwise

template <typename T>
Var<T> add(const Var<T>& a, const Var<T>& b) {
  require_same(a.shape(), b.shape(), "add");
  Tensor<T> out = a.value();
  out.add_(b.value());
  return make_result<T>(std::move(out), {a, b}, [](Node<T>& self) {
    for (std::size_t i = 0; i < 2; ++i) {
      if (auto* g = grad_of(self, i)) g->add_(self.grad);
    }
  });
}

template <typename T>
Var<T> sub(const Var<T>& a, const Var<T>& b) {
  require_same(a.shape(), b.shape(), "sub");
  Tensor<T> out = a.value();
  const auto& bv = b.value();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] -= bv[i];
  return make_result<T>(std::move(out), {a, b}, [](Node<T>& self) {
    if (auto* g = grad_of(self, 0)) g->add_(self.grad);
    if (auto* g = grad_of(self, 1)) {
      for (std::size_t i = 0; i < g->size(); ++i) (*g)[i] -= self.grad[i];
    }
  });
}

template <typename T>
Var<T> mul(const Var<T>& a, const Var<T>& b) {
  require_same(a.shape(), b.shape(), "mul");
  Tensor<T> out = a.value();
  const auto& bv = b.value();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] *= bv[i];
  return make_result<T>(std::move(out), {a, b}, [](Node<T>& self) {
    const auto& av = self.inputs[0]->value;
    const auto& bv = self.inputs[1]->value;
    if (auto* g = grad_of(self, 0)) {
      for (std::size_t i = 0; i < g->size(); ++i) (*g)[i] += self.grad[i] * bv[i];
    }
    if (auto* g = grad_of(self, 1)) {
      for (std::size_t i = 0; i < g->size(); ++i) (*g)[i] += self.grad[i] * av[i];
    }
  });
}

template <typename T>
Var<T> scale(const Var<T>& a, T factor) {
  Tensor<T> out = a.value();
  for (auto& v : out.values()) v *= factor;
  return make_result<T>(std::move(out), {a}, [factor](Node<T>& self) {
    if (auto* g = grad_of(self, 0)) {
      for (std::size_t i = 0; i < g->size(); ++i) (*g)[i] += self.grad[i] * factor;
    }
  });
}

template <typename T>
Var<T> add_scalar(const Var<T>& a, T offset) {
  Tensor<T> out = a.value();
  for (auto& v : out.values()) v += offset;
  return make_result<T>(std::move(out), {a}, [](Node<T>& self) {
    if (auto* g = grad_of(self, 0)) g->add_(self.grad);
  });
}

template <typename T>
Var<T> leaky_relu(const Var<T>& x, T slope) {
  Tensor<T> out = x.value();
  for (auto& v : out.values()) v = v > T(0) ? v : v * slope;
  return make_result<T>(std::move(out), {x}, [slope](Node<T>& self) {
    const auto& xv = self.inputs[0]->value;
    if (auto* g = grad_of(self, 0)) {
      for (std::size_t i = 0; i < g->size(); ++i) {
        (*g)[i] += xv[i] > T(0) ? self.grad[i] : self.grad[i] * slope;
      }
    }
  });
}

template <typename T>
Var<T> sigmoid(const Var<T>& x) {
  Tensor<T> out = x.value();
  for (auto& v : out.values()) v = stable_sigmoid(v);
  return make_result<T>(std::move(out), {x}, [](Node<T>& self) {
    if (auto* g = grad_of(self, 0)) {
      for (std::size_t i = 0; i < g->size(); ++i) {
        const T s = self.value[i];
        (*g)[i] += self.grad[i] * s * (T(1) - s);
      }
    }
  });
}

template <typename T>
Var<T> tanh(const Var<T>& x) {
  Tensor<T> out = x.value();
  for (auto& v : out.values()) v = std::tanh(v);
  return make_result<T>(std::move(out), {x}, [](Node<T>& self) {
    if (auto* g = grad_of(self, 0)) {
      for (std::size_t i = 0; i < g->size(); ++i) {
        const T t = self.value[i];
        (*g)[i] += self.grad[i] * (T(1) - t * t);
      }
    }
  });
}

template <typename T>
Var<T> clamp(const Var<T>& x, T lo, T hi) {
  Tensor<T> out = x.value();
  for (auto& v : out.values()) v = std::clamp(v, lo, hi);
  return make_result<T>(std::move(out), {x}, [lo, hi](Node<T>& self) {
    const auto& xv = self.inputs[0]->value;
    if (auto* g = grad_of(self, 0)) {
      for (std::size_t i = 0; i < g->size(); ++i) {
        if (xv[i] >= lo && xv[i] <= hi) (*g)[i] += self.grad[i];
      }
    }
  });
}

// ---------------------------------------------------------------------------
// Convolution and dense layers

namespace {

struct ConvGeometry {
  int channels, height, width, kernel, stride, padding, out_h, out_w;
  std::size_t rows() const { return static_cast<std::size_t>(channels) * kernel * kernel; }
  std::size_t cols() const { return static_cast<std::size_t>(out_h) * out_w; }
};

template <typename T>
void im2col(const T* src, const ConvGeometry& g, T* col) {
  const std::size_t cols = g.cols();
  for (int c = 0; c < g.channels; ++c) {
    const T* plane = src + static_cast<std::size_t>(c) * g.height * g.width;
    for (int ky = 0; ky < g.kernel; ++ky) {
      for (int kx = 0; kx < g.kernel; ++kx) {
        T* row = col + ((static_cast<std::size_t>(c) * g.kernel + ky) * g.kernel + kx) * cols;
        for (int oy = 0; oy < g.out_h; ++oy) {
          const int iy = oy * g.stride - g.padding + ky;
          T* dst = row + static_cast<std::size_t>(oy) * g.out_w;
          if (iy < 0 || iy >= g.height) {
            std::fill(dst, dst + g.out_w, T(0));
            continue;
          }
          const T* srow = plane + static_cast<std::size_t>(iy) * g.width;
          for (int ox = 0; ox < g.out_w; ++ox) {
            const int ix = ox * g.stride - g.padding + kx;
            dst[ox] = (ix >= 0 && ix < g.width) ? srow[ix] : T(0);
          }
        }
      }
    }
  }
}

template <typename T>
void col2im_add(const T* col, const ConvGeometry& g, T* dst) {
  const std::size_t cols = g.cols();
  for (int c = 0; c < g.channels; ++c) {
    T* plane = dst + static_cast<std::size_t>(c) * g.height * g.width;
    for (int ky = 0; ky < g.kernel; ++ky) {
      for (int kx = 0; kx < g.kernel; ++kx) {
        const T* row = col + ((static_cast<std::size_t>(c) * g.kernel + ky) * g.kernel + kx) * cols;
        for (int oy = 0; oy < g.out_h; ++oy) {
          const int iy = oy * g.stride - g.padding + ky;
          if (iy < 0 || iy >= g.height) continue;
          T* drow = plane + static_cast<std::size_t>(iy) * g.width;
          const T* srow = row + static_cast<std::size_t>(oy) * g.out_w;
          for (int ox = 0; ox < g.out_w; ++ox) {
            const int ix = ox * g.stride - g.padding + kx;
            if (ix >= 0 && ix < g.width) drow[ix] += srow[ox];
          }
        }
      }
    }
  }
}

}  // namespace

template <typename T>
Var<T> conv2d(const Var<T>& x, const Var<T>& weight, const Var<T>& bias, int stride, int padding) {
  const Shape xs = x.shape();
  const Shape ws = weight.shape();
  if (ws.c != xs.c || ws.h != ws.w) {
    throw ShapeMismatch("conv2d: input " + xs.str() + " incompatible with weight " + ws.str());
  }
  if (stride < 1 || padding < 0) throw InvalidArgument("conv2d: bad stride/padding");
  ConvGeometry g{xs.c, xs.h, xs.w, ws.h, stride, padding, 0, 0};
  g.out_h = (xs.h + 2 * padding - ws.h) / stride + 1;
  g.out_w = (xs.w + 2 * padding - ws.w) / stride + 1;
  if (g.out_h <= 0 || g.out_w <= 0) throw ShapeMismatch("conv2d: input smaller than kernel");
  const bool has_bias = bias.defined();
  if (has_bias && bias.value().size() != static_cast<std::size_t>(ws.n)) {
    throw ShapeMismatch("conv2d: bias size does not match output channels");
  }

  const int cout = ws.n;
  const auto K = static_cast<Eigen::Index>(g.rows());
  const auto P = static_cast<Eigen::Index>(g.cols());
  Tensor<T> out(Shape{xs.n, cout, g.out_h, g.out_w});
  std::vector<T> col(g.rows() * g.cols());
  CMapR<T> W(weight.value().data(), cout, K);
  const std::size_t in_stride = static_cast<std::size_t>(xs.c) * xs.h * xs.w;
  const std::size_t out_stride = static_cast<std::size_t>(cout) * g.cols();
  for (int n = 0; n < xs.n; ++n) {
    im2col(x.value().data() + n * in_stride, g, col.data());
    MapR<T> O(out.data() + n * out_stride, cout, P);
    O.noalias() = W * CMapR<T>(col.data(), K, P);
    if (has_bias) {
      for (int o = 0; o < cout; ++o) O.row(o).array() += bias.value()[o];
    }
  }

  std::vector<Var<T>> inputs{x, weight};
  if (has_bias) inputs.push_back(bias);
  return make_result<T>(std::move(out), inputs, [g, cout, K, P, in_stride, out_stride,
                                                 has_bias](Node<T>& self) {
    const auto& xv = self.inputs[0]->value;
    const auto& wv = self.inputs[1]->value;
    Tensor<T>* gx = grad_of(self, 0);
    Tensor<T>* gw = grad_of(self, 1);
    Tensor<T>* gb = has_bias ? grad_of(self, 2) : nullptr;
    std::vector<T> col(static_cast<std::size_t>(K * P));
    CMapR<T> W(wv.data(), cout, K);
    const int batch = xv.shape().n;
    for (int n = 0; n < batch; ++n) {
      CMapR<T> GO(self.grad.data() + n * out_stride, cout, P);
      if (gw) {
        im2col(xv.data() + n * in_stride, g, col.data());
        MapR<T> GW(gw->data(), cout, K);
        GW.noalias() += GO * CMapR<T>(col.data(), K, P).transpose();
      }
      if (gb) {
        for (int o = 0; o < cout; ++o) (*gb)[o] += GO.row(o).sum();
      }
      if (gx) {
        MapR<T> C(col.data(), K, P);
        C.noalias() = W.transpose() * GO;
        col2im_add(col.data(), g, gx->data() + n * in_stride);
      }
    }
  });
}

template <typename T>
Var<T> linear(const Var<T>& x, const Var<T>& weight, const Var<T>& bias) {
  const Shape xs = x.shape();
  const Shape ws = weight.shape();
  const auto in = static_cast<Eigen::Index>(static_cast<std::size_t>(xs.c) * xs.h * xs.w);
  if (static_cast<std::size_t>(ws.c) * ws.h * ws.w != static_cast<std::size_t>(in)) {
    throw ShapeMismatch("linear: input " + xs.str() + " incompatible with weight " + ws.str());
  }
  const int out_dim = ws.n;
  const bool has_bias = bias.defined();
  if (has_bias && bias.value().size() != static_cast<std::size_t>(out_dim)) {
    throw ShapeMismatch("linear: bias size does not match output dimension");
  }
  Tensor<T> out(Shape{xs.n, out_dim, 1, 1});
  CMapR<T> X(x.value().data(), xs.n, in);
  CMapR<T> W(weight.value().data(), out_dim, in);
  MapR<T> Y(out.data(), xs.n, out_dim);
  Y.noalias() = X * W.transpose();
  if (has_bias) {
    for (int n = 0; n < xs.n; ++n) {
      for (int o = 0; o < out_dim; ++o) Y(n, o) += bias.value()[o];
    }
  }
  std::vector<Var<T>> inputs{x, weight};
  if (has_bias) inputs.push_back(bias);
  return make_result<T>(std::move(out), inputs, [in, out_dim, has_bias](Node<T>& self) {
    const auto& xv = self.inputs[0]->value;
    const auto& wv = self.inputs[1]->value;
    const int batch = xv.shape().n;
    CMapR<T> GY(self.grad.data(), batch, out_dim);
    if (auto* gx = grad_of(self, 0)) {
      MapR<T>(gx->data(), batch, in).noalias() += GY * CMapR<T>(wv.data(), out_dim, in);
    }
    if (auto* gw = grad_of(self, 1)) {
      MapR<T>(gw->data(), out_dim, in).noalias() += GY.transpose() * CMapR<T>(xv.data(), batch, in);
    }
    if (has_bias) {
      if (auto* gb = grad_of(self, 2)) {
        for (int o = 0; o < out_dim; ++o) (*gb)[o] += GY.col(o).sum();
      }
    }
  });
}

// ---------------------------------------------------------------------------
// Layout

template <typename T>
Var<T> upsample_nearest(const Var<T>& x, int factor) {
  if (factor < 1) throw InvalidArgument("upsample_nearest: factor must be >= 1");
  const Shape s = x.shape();
  Tensor<T> out(Shape{s.n, s.c, s.h * factor, s.w * factor});
  const auto& xv = x.value();
  for (int n = 0; n < s.n; ++n) {
    for (int c = 0; c < s.c; ++c) {
      for (int y = 0; y < s.h * factor; ++y) {
        for (int xx = 0; xx < s.w * factor; ++xx) {
          out.at(n, c, y, xx) = xv.at(n, c, y / factor, xx / factor);
        }
      }
    }
  }
  return make_result<T>(std::move(out), {x}, [factor](Node<T>& self) {
    auto* g = grad_of(self, 0);
    if (!g) return;
    const Shape s = g->shape();
    for (int n = 0; n < s.n; ++n) {
      for (int c = 0; c < s.c; ++c) {
        for (int y = 0; y < s.h * factor; ++y) {
          for (int xx = 0; xx < s.w * factor; ++xx) {
            g->at(n, c, y / factor, xx / factor) += self.grad.at(n, c, y, xx);
          }
        }
      }
    }
  });
}

template <typename T>
Var<T> concat_channels(const Var<T>& a, const Var<T>& b) {
  const Shape sa = a.shape();
  const Shape sb = b.shape();
  if (sa.n != sb.n || sa.h != sb.h || sa.w != sb.w) {
    throw ShapeMismatch("concat_channels: " + sa.str() + " vs " + sb.str());
  }
  Tensor<T> out(Shape{sa.n, sa.c + sb.c, sa.h, sa.w});
  const std::size_t pa = static_cast<std::size_t>(sa.c) * sa.plane();
  const std::size_t pb = static_cast<std::size_t>(sb.c) * sb.plane();
  for (int n = 0; n < sa.n; ++n) {
    std::copy_n(a.value().data() + n * pa, pa, out.data() + n * (pa + pb));
    std::copy_n(b.value().data() + n * pb, pb, out.data() + n * (pa + pb) + pa);
  }
  return make_result<T>(std::move(out), {a, b}, [pa, pb](Node<T>& self) {
    const int batch = self.value.shape().n;
    if (auto* g = grad_of(self, 0)) {
      for (int n = 0; n < batch; ++n) {
        for (std::size_t i = 0; i < pa; ++i) (*g)[n * pa + i] += self.grad[n * (pa + pb) + i];
      }
    }
    if (auto* g = grad_of(self, 1)) {
      for (int n = 0; n < batch; ++n) {
        for (std::size_t i = 0; i < pb; ++i) (*g)[n * pb + i] += self.grad[n * (pa + pb) + pa + i];
      }
    }
  });
}

template <typename T>
Var<T> slice_channels(const Var<T>& x, int begin, int count) {
  const Shape s = x.shape();
  if (begin < 0 || count <= 0 || begin + count > s.c) {
    throw InvalidArgument("slice_channels: range out of bounds for " + s.str());
  }
  const std::size_t plane = s.plane();
  Tensor<T> out(Shape{s.n, count, s.h, s.w});
  for (int n = 0; n < s.n; ++n) {
    std::copy_n(x.value().data() + (static_cast<std::size_t>(n) * s.c + begin) * plane, count * plane,
                out.data() + static_cast<std::size_t>(n) * count * plane);
  }
  return make_result<T>(std::move(out), {x}, [s, begin, count, plane](Node<T>& self) {
    auto* g = grad_of(self, 0);
    if (!g) return;
    for (int n = 0; n < s.n; ++n) {
      for (std::size_t i = 0; i < count * plane; ++i) {
        (*g)[(static_cast<std::size_t>(n) * s.c + begin) * plane + i] +=
            self.grad[static_cast<std::size_t>(n) * count * plane + i];
      }
    }
  });
}

template <typename T>
Var<T> reshape(const Var<T>& x, Shape shape) {
  Tensor<T> out = x.value().reshaped(shape);
  return make_result<T>(std::move(out), {x}, [](Node<T>& self) {
    if (auto* g = grad_of(self, 0)) {
      for (std::size_t i = 0; i < g->size(); ++i) (*g)[i] += self.grad[i];
    }
  });
}

// ---------------------------------------------------------------------------
// Pooling

template <typename T>
Var<T> global_avg_pool(const Var<T>& x) {
  const Shape s = x.shape();
  const std::size_t plane = s.plane();
  Tensor<T> out(Shape{s.n, s.c, 1, 1});
  for (std::size_t nc = 0; nc < static_cast<std::size_t>(s.n) * s.c; ++nc) {
    T acc = 0;
    const T* p = x.value().data() + nc * plane;
    for (std::size_t i = 0; i < plane; ++i) acc += p[i];
    out[nc] = acc / static_cast<T>(plane);
  }
  return make_result<T>(std::move(out), {x}, [plane](Node<T>& self) {
    auto* g = grad_of(self, 0);
    if (!g) return;
    for (std::size_t nc = 0; nc < self.grad.size(); ++nc) {
      const T v = self.grad[nc] / static_cast<T>(plane);
      for (std::size_t i = 0; i < plane; ++i) (*g)[nc * plane + i] += v;
    }
  });
}

namespace {

inline int bin_start(int i, int in, int out) { return (i * in) / out; }
inline int bin_end(int i, int in, int out) { return ((i + 1) * in + out - 1) / out; }

void check_pool_target(const Shape& s, int out_h, int out_w, const char* op) {
  if (out_h <= 0 || out_w <= 0 || out_h > s.h || out_w > s.w) {
    throw InvalidArgument(std::string(op) + ": target " + std::to_string(out_h) + "x" +
                          std::to_string(out_w) + " invalid for input " + s.str());
  }
}

}  // namespace

template <typename T>
Var<T> adaptive_max_pool(const Var<T>& x, int out_h, int out_w) {
  const Shape s = x.shape();
  check_pool_target(s, out_h, out_w, "adaptive_max_pool");
  Tensor<T> out(Shape{s.n, s.c, out_h, out_w});
  std::vector<std::size_t> argmax(out.size());
  const auto& xv = x.value();
  std::size_t k = 0;
  for (int n = 0; n < s.n; ++n) {
    for (int c = 0; c < s.c; ++c) {
      for (int oy = 0; oy < out_h; ++oy) {
        const int y0 = bin_start(oy, s.h, out_h), y1 = bin_end(oy, s.h, out_h);
        for (int ox = 0; ox < out_w; ++ox, ++k) {
          const int x0 = bin_start(ox, s.w, out_w), x1 = bin_end(ox, s.w, out_w);
          std::size_t best = xv.index(n, c, y0, x0);
          for (int y = y0; y < y1; ++y) {
            for (int xx = x0; xx < x1; ++xx) {
              const std::size_t idx = xv.index(n, c, y, xx);
              if (xv[idx] > xv[best]) best = idx;
            }
          }
          out[k] = xv[best];
          argmax[k] = best;
        }
      }
    }
  }
  return make_result<T>(std::move(out), {x}, [argmax = std::move(argmax)](Node<T>& self) {
    auto* g = grad_of(self, 0);
    if (!g) return;
    for (std::size_t k = 0; k < argmax.size(); ++k) (*g)[argmax[k]] += self.grad[k];
  });
}

template <typename T>
Var<T> adaptive_avg_pool(const Var<T>& x, int out_h, int out_w) {
  const Shape s = x.shape();
  check_pool_target(s, out_h, out_w, "adaptive_avg_pool");
  Tensor<T> out(Shape{s.n, s.c, out_h, out_w});
  const auto& xv = x.value();
  for (int n = 0; n < s.n; ++n) {
    for (int c = 0; c < s.c; ++c) {
      for (int oy = 0; oy < out_h; ++oy) {
        const int y0 = bin_start(oy, s.h, out_h), y1 = bin_end(oy, s.h, out_h);
        for (int ox = 0; ox < out_w; ++ox) {
          const int x0 = bin_start(ox, s.w, out_w), x1 = bin_end(ox, s.w, out_w);
          T acc = 0;
          for (int y = y0; y < y1; ++y) {
            for (int xx = x0; xx < x1; ++xx) acc += xv.at(n, c, y, xx);
          }
          out.at(n, c, oy, ox) = acc / static_cast<T>((y1 - y0) * (x1 - x0));
        }
      }
    }
  }
  return make_result<T>(std::move(out), {x}, [s, out_h, out_w](Node<T>& self) {
    auto* g = grad_of(self, 0);
    if (!g) return;
    for (int n = 0; n < s.n; ++n) {
      for (int c = 0; c < s.c; ++c) {
        for (int oy = 0; oy < out_h; ++oy) {
          const int y0 = bin_start(oy, s.h, out_h), y1 = bin_end(oy, s.h, out_h);
          for (int ox = 0; ox < out_w; ++ox) {
            const int x0 = bin_start(ox, s.w, out_w), x1 = bin_end(ox, s.w, out_w);
            const T v = self.grad.at(n, c, oy, ox) / static_cast<T>((y1 - y0) * (x1 - x0));
            for (int y = y0; y < y1; ++y) {
              for (int xx = x0; xx < x1; ++xx) g->at(n, c, y, xx) += v;
            }
          }
        }
      }
    }
  });
}

template <typename T>
Var<T> channel_mul(const Var<T>& x, const Var<T>& weights) {
  const Shape s = x.shape();
  const Shape ws = weights.shape();
  if (ws.c != s.c || ws.h != 1 || ws.w != 1 || (ws.n != s.n && ws.n != 1)) {
    throw ShapeMismatch("channel_mul: features " + s.str() + " vs weights " + ws.str());
  }
  const std::size_t plane = s.plane();
  const bool broadcast = ws.n == 1;
  Tensor<T> out = x.value();
  for (int n = 0; n < s.n; ++n) {
    for (int c = 0; c < s.c; ++c) {
      const T w = weights.value()[(broadcast ? 0 : n) * s.c + c];
      T* p = out.data() + (static_cast<std::size_t>(n) * s.c + c) * plane;
      for (std::size_t i = 0; i < plane; ++i) p[i] *= w;
    }
  }
  return make_result<T>(std::move(out), {x, weights}, [s, plane, broadcast](Node<T>& self) {
    const auto& xv = self.inputs[0]->value;
    const auto& wv = self.inputs[1]->value;
    auto* gx = grad_of(self, 0);
    auto* gw = grad_of(self, 1);
    for (int n = 0; n < s.n; ++n) {
      for (int c = 0; c < s.c; ++c) {
        const std::size_t widx = (broadcast ? 0 : n) * s.c + c;
        const std::size_t base = (static_cast<std::size_t>(n) * s.c + c) * plane;
        if (gx) {
          for (std::size_t i = 0; i < plane; ++i) (*gx)[base + i] += self.grad[base + i] * wv[widx];
        }
        if (gw) {
          T acc = 0;
          for (std::size_t i = 0; i < plane; ++i) acc += self.grad[base + i] * xv[base + i];
          (*gw)[widx] += acc;
        }
      }
    }
  });
}

// ---------------------------------------------------------------------------
// Spatial transformer

template <typename T>
Var<T> warp(const Var<T>& img, const Var<T>& field) {
  const Shape s = img.shape();
  const Shape fs = field.shape();
  if (fs.n != s.n || fs.c != 2 || fs.h != s.h || fs.w != s.w) {
    throw ShapeMismatch("warp: image " + s.str() + " vs field " + fs.str());
  }
  Tensor<T> out(s);
  const auto& iv = img.value();
  const auto& fv = field.value();
  const T max_x = static_cast<T>(s.w - 1);
  const T max_y = static_cast<T>(s.h - 1);
  for (int n = 0; n < s.n; ++n) {
    for (int y = 0; y < s.h; ++y) {
      for (int x = 0; x < s.w; ++x) {
        const T sx = std::clamp(static_cast<T>(x) + fv.at(n, 0, y, x), T(0), max_x);
        const T sy = std::clamp(static_cast<T>(y) + fv.at(n, 1, y, x), T(0), max_y);
        const int x0 = static_cast<int>(std::floor(sx));
        const int y0 = static_cast<int>(std::floor(sy));
        const int x1 = std::min(x0 + 1, s.w - 1);
        const int y1 = std::min(y0 + 1, s.h - 1);
        const T ax = sx - static_cast<T>(x0);
        const T ay = sy - static_cast<T>(y0);
        for (int c = 0; c < s.c; ++c) {
          const T top = (T(1) - ax) * iv.at(n, c, y0, x0) + ax * iv.at(n, c, y0, x1);
          const T bottom = (T(1) - ax) * iv.at(n, c, y1, x0) + ax * iv.at(n, c, y1, x1);
          out.at(n, c, y, x) = (T(1) - ay) * top + ay * bottom;
        }
      }
    }
  }
  return make_result<T>(std::move(out), {img, field}, [s, max_x, max_y](Node<T>& self) {
    const auto& iv = self.inputs[0]->value;
    const auto& fv = self.inputs[1]->value;
    auto* gi = grad_of(self, 0);
    auto* gf = grad_of(self, 1);
    for (int n = 0; n < s.n; ++n) {
      for (int y = 0; y < s.h; ++y) {
        for (int x = 0; x < s.w; ++x) {
          const T px = static_cast<T>(x) + fv.at(n, 0, y, x);
          const T py = static_cast<T>(y) + fv.at(n, 1, y, x);
          const T sx = std::clamp(px, T(0), max_x);
          const T sy = std::clamp(py, T(0), max_y);
          const bool x_inside = px >= T(0) && px <= max_x;
          const bool y_inside = py >= T(0) && py <= max_y;
          const int x0 = static_cast<int>(std::floor(sx));
          const int y0 = static_cast<int>(std::floor(sy));
          const int x1 = std::min(x0 + 1, s.w - 1);
          const int y1 = std::min(y0 + 1, s.h - 1);
          const T ax = sx - static_cast<T>(x0);
          const T ay = sy - static_cast<T>(y0);
          T dsx = 0, dsy = 0;
          for (int c = 0; c < s.c; ++c) {
            const T g = self.grad.at(n, c, y, x);
            const T v00 = iv.at(n, c, y0, x0), v01 = iv.at(n, c, y0, x1);
            const T v10 = iv.at(n, c, y1, x0), v11 = iv.at(n, c, y1, x1);
            if (gi) {
              gi->at(n, c, y0, x0) += g * (T(1) - ax) * (T(1) - ay);
              gi->at(n, c, y0, x1) += g * ax * (T(1) - ay);
              gi->at(n, c, y1, x0) += g * (T(1) - ax) * ay;
              gi->at(n, c, y1, x1) += g * ax * ay;
            }
            dsx += g * ((T(1) - ay) * (v01 - v00) + ay * (v11 - v10));
            dsy += g * ((T(1) - ax) * (v10 - v00) + ax * (v11 - v01));
          }
          if (gf) {
            if (x_inside) gf->at(n, 0, y, x) += dsx;
            if (y_inside) gf->at(n, 1, y, x) += dsy;
          }
        }
      }
    }
  });
}

// ---------------------------------------------------------------------------
// Registration losses

namespace {

// Summed-area table with a zero guard row/column; box() sums the clipped
// window of half-width r centred on (y, x).
class BoxSums {
 public:
  BoxSums(int h, int w) : h_(h), w_(w), table_(static_cast<std::size_t>(h + 1) * (w + 1), 0.0) {}

  template <typename F>
  void build(F&& value_at) {
    for (int y = 0; y < h_; ++y) {
      double row = 0.0;
      for (int x = 0; x < w_; ++x) {
        row += value_at(y, x);
        cell(y + 1, x + 1) = cell(y, x + 1) + row;
      }
    }
  }

  double box(int y, int x, int r) const {
    const int y0 = std::max(0, y - r), y1 = std::min(h_ - 1, y + r);
    const int x0 = std::max(0, x - r), x1 = std::min(w_ - 1, x + r);
    return cell(y1 + 1, x1 + 1) - cell(y0, x1 + 1) - cell(y1 + 1, x0) + cell(y0, x0);
  }

  double count(int y, int x, int r) const {
    const int y0 = std::max(0, y - r), y1 = std::min(h_ - 1, y + r);
    const int x0 = std::max(0, x - r), x1 = std::min(w_ - 1, x + r);
    return static_cast<double>((y1 - y0 + 1) * (x1 - x0 + 1));
  }

 private:
  double& cell(int y, int x) { return table_[static_cast<std::size_t>(y) * (w_ + 1) + x]; }
  double cell(int y, int x) const { return table_[static_cast<std::size_t>(y) * (w_ + 1) + x]; }

  int h_, w_;
  std::vector<double> table_;
};

}  // namespace

template <typename T>
Var<T> local_ncc_loss(const Var<T>& a, const Var<T>& b, int window, double eps) {
  const Shape s = a.shape();
  require_same(s, b.shape(), "local_ncc_loss");
  if (window < 1 || window % 2 == 0) throw InvalidArgument("local_ncc_loss: window must be odd");
  if (window > s.h || window > s.w) {
    throw InvalidArgument("local_ncc_loss: window " + std::to_string(window) +
                          " larger than image " + std::to_string(s.h) + "x" + std::to_string(s.w));
  }
  const int r = window / 2;
  const int h = s.h, w = s.w;
  const std::size_t plane = s.plane();
  const std::size_t planes = static_cast<std::size_t>(s.n) * s.c;
  const double inv_total = 1.0 / static_cast<double>(planes * plane);

  // Per position: dcc/dS_ab, dcc/dS_a, dcc/dS_b, dcc/dS_aa, dcc/dS_bb.
  std::vector<double> coeff(planes * plane * 5);
  double total = 0.0;
  BoxSums sa(h, w), sb(h, w), saa(h, w), sbb(h, w), sab(h, w);
  for (std::size_t pl = 0; pl < planes; ++pl) {
    const T* A = a.value().data() + pl * plane;
    const T* B = b.value().data() + pl * plane;
    auto at = [w](const T* p, int y, int x) { return static_cast<double>(p[y * w + x]); };
    sa.build([&](int y, int x) { return at(A, y, x); });
    sb.build([&](int y, int x) { return at(B, y, x); });
    saa.build([&](int y, int x) { return at(A, y, x) * at(A, y, x); });
    sbb.build([&](int y, int x) { return at(B, y, x) * at(B, y, x); });
    sab.build([&](int y, int x) { return at(A, y, x) * at(B, y, x); });
    for (int y = 0; y < h; ++y) {
      for (int x = 0; x < w; ++x) {
        const double cnt = sa.count(y, x, r);
        const double SA = sa.box(y, x, r), SB = sb.box(y, x, r);
        const double cross = sab.box(y, x, r) - SA * SB / cnt;
        const double va = saa.box(y, x, r) - SA * SA / cnt + eps;
        const double vb = sbb.box(y, x, r) - SB * SB / cnt + eps;
        const double den = va * vb;
        total += cross * cross / den;
        double* k = coeff.data() + (pl * plane + static_cast<std::size_t>(y) * w + x) * 5;
        const double d_ab = 2.0 * cross / den;
        const double d_aa = -cross * cross / (va * den);
        const double d_bb = -cross * cross / (vb * den);
        k[0] = d_ab;
        k[1] = -d_ab * SB / cnt - 2.0 * d_aa * SA / cnt;
        k[2] = -d_ab * SA / cnt - 2.0 * d_bb * SB / cnt;
        k[3] = d_aa;
        k[4] = d_bb;
      }
    }
  }
  Tensor<T> out(scalar_shape(), static_cast<T>(-total * inv_total));
  return make_result<T>(std::move(out), {a, b},
                        [s, r, inv_total, coeff = std::move(coeff)](Node<T>& self) {
    auto* ga = grad_of(self, 0);
    auto* gb = grad_of(self, 1);
    const int h = s.h, w = s.w;
    const std::size_t plane = s.plane();
    const std::size_t planes = static_cast<std::size_t>(s.n) * s.c;
    const double scale_factor = -static_cast<double>(self.grad[0]) * inv_total;
    BoxSums k_ab(h, w), k_a(h, w), k_b(h, w), k_aa(h, w), k_bb(h, w);
    for (std::size_t pl = 0; pl < planes; ++pl) {
      const double* K = coeff.data() + pl * plane * 5;
      auto at = [&](int y, int x, int j) { return K[(static_cast<std::size_t>(y) * w + x) * 5 + j]; };
      k_ab.build([&](int y, int x) { return at(y, x, 0); });
      if (ga) {
        k_a.build([&](int y, int x) { return at(y, x, 1); });
        k_aa.build([&](int y, int x) { return at(y, x, 3); });
      }
      if (gb) {
        k_b.build([&](int y, int x) { return at(y, x, 2); });
        k_bb.build([&](int y, int x) { return at(y, x, 4); });
      }
      const T* A = self.inputs[0]->value.data() + pl * plane;
      const T* B = self.inputs[1]->value.data() + pl * plane;
      for (int y = 0; y < h; ++y) {
        for (int x = 0; x < w; ++x) {
          const std::size_t i = static_cast<std::size_t>(y) * w + x;
          const double av = A[i], bv = B[i];
          const double cab = k_ab.box(y, x, r);
          if (ga) {
            const double g = bv * cab + k_a.box(y, x, r) + 2.0 * av * k_aa.box(y, x, r);
            (*ga)[pl * plane + i] += static_cast<T>(scale_factor * g);
          }
          if (gb) {
            const double g = av * cab + k_b.box(y, x, r) + 2.0 * bv * k_bb.box(y, x, r);
            (*gb)[pl * plane + i] += static_cast<T>(scale_factor * g);
          }
        }
      }
    }
  });
}

template <typename T>
Var<T> smoothness_loss(const Var<T>& field) {
  const Shape s = field.shape();
  if (s.c != 2) throw ShapeMismatch("smoothness_loss: field must have 2 channels, got " + s.str());
  if (s.h < 2 || s.w < 2) throw InvalidArgument("smoothness_loss: field must be at least 2x2");
  const double inv = 1.0 / (static_cast<double>(s.n) * (s.h - 1) * (s.w - 1));
  const auto& f = field.value();
  double total = 0.0;
  for (int n = 0; n < s.n; ++n) {
    for (int c = 0; c < 2; ++c) {
      for (int y = 0; y < s.h - 1; ++y) {
        for (int x = 0; x < s.w - 1; ++x) {
          const double v = f.at(n, c, y, x);
          const double gx = f.at(n, c, y, x + 1) - v;
          const double gy = f.at(n, c, y + 1, x) - v;
          total += gx * gx + gy * gy;
        }
      }
    }
  }
  Tensor<T> out(scalar_shape(), static_cast<T>(total * inv));
  return make_result<T>(std::move(out), {field}, [s, inv](Node<T>& self) {
    auto* g = grad_of(self, 0);
    if (!g) return;
    const auto& f = self.inputs[0]->value;
    const T k = static_cast<T>(2.0 * inv) * self.grad[0];
    for (int n = 0; n < s.n; ++n) {
      for (int c = 0; c < 2; ++c) {
        for (int y = 0; y < s.h - 1; ++y) {
          for (int x = 0; x < s.w - 1; ++x) {
            const T v = f.at(n, c, y, x);
            const T gx = f.at(n, c, y, x + 1) - v;
            const T gy = f.at(n, c, y + 1, x) - v;
            g->at(n, c, y, x + 1) += k * gx;
            g->at(n, c, y + 1, x) += k * gy;
            g->at(n, c, y, x) -= k * (gx + gy);
          }
        }
      }
    }
  });
}

// ---------------------------------------------------------------------------
// Reductions and objectives

template <typename T>
Var<T> mean(const Var<T>& x) {
  double acc = 0.0;
  for (T v : x.value().values()) acc += v;
  const std::size_t count = x.value().size();
  Tensor<T> out(scalar_shape(), static_cast<T>(acc / static_cast<double>(count)));
  return make_result<T>(std::move(out), {x}, [count](Node<T>& self) {
    auto* g = grad_of(self, 0);
    if (!g) return;
    const T v = self.grad[0] / static_cast<T>(count);
    for (auto& e : g->values()) e += v;
  });
}

template <typename T>
Var<T> mean_abs_diff(const Var<T>& a, const Var<T>& b) {
  require_same(a.shape(), b.shape(), "mean_abs_diff");
  double acc = 0.0;
  const auto& av = a.value();
  const auto& bv = b.value();
  for (std::size_t i = 0; i < av.size(); ++i) acc += std::abs(static_cast<double>(av[i]) - bv[i]);
  const std::size_t count = av.size();
  Tensor<T> out(scalar_shape(), static_cast<T>(acc / static_cast<double>(count)));
  return make_result<T>(std::move(out), {a, b}, [count](Node<T>& self) {
    const auto& av = self.inputs[0]->value;
    const auto& bv = self.inputs[1]->value;
    const T k = self.grad[0] / static_cast<T>(count);
    auto* ga = grad_of(self, 0);
    auto* gb = grad_of(self, 1);
    for (std::size_t i = 0; i < av.size(); ++i) {
      const T d = av[i] - bv[i];
      const T sgn = d > T(0) ? T(1) : (d < T(0) ? T(-1) : T(0));
      if (ga) (*ga)[i] += k * sgn;
      if (gb) (*gb)[i] -= k * sgn;
    }
  });
}

template <typename T>
Var<T> softplus_mean(const Var<T>& x, T sign) {
  double acc = 0.0;
  for (T v : x.value().values()) acc += stable_softplus(sign * v);
  const std::size_t count = x.value().size();
  Tensor<T> out(scalar_shape(), static_cast<T>(acc / static_cast<double>(count)));
  return make_result<T>(std::move(out), {x}, [sign, count](Node<T>& self) {
    auto* g = grad_of(self, 0);
    if (!g) return;
    const auto& xv = self.inputs[0]->value;
    const T k = self.grad[0] / static_cast<T>(count);
    for (std::size_t i = 0; i < xv.size(); ++i) (*g)[i] += k * sign * stable_sigmoid(sign * xv[i]);
  });
}

template <typename T>
Var<T> l2_normalize(const Var<T>& x) {
  const Shape s = x.shape();
  const std::size_t dim = x.value().size() / s.n;
  Tensor<T> out = x.value();
  std::vector<T> norms(s.n);
  for (int n = 0; n < s.n; ++n) {
    double acc = 0.0;
    for (std::size_t i = 0; i < dim; ++i) acc += static_cast<double>(out[n * dim + i]) * out[n * dim + i];
    norms[n] = static_cast<T>(std::max(std::sqrt(acc), 1e-12));
    for (std::size_t i = 0; i < dim; ++i) out[n * dim + i] /= norms[n];
  }
  return make_result<T>(std::move(out), {x}, [dim, norms = std::move(norms)](Node<T>& self) {
    auto* g = grad_of(self, 0);
    if (!g) return;
    for (std::size_t n = 0; n < norms.size(); ++n) {
      T dot = 0;
      for (std::size_t i = 0; i < dim; ++i) dot += self.value[n * dim + i] * self.grad[n * dim + i];
      for (std::size_t i = 0; i < dim; ++i) {
        (*g)[n * dim + i] += (self.grad[n * dim + i] - self.value[n * dim + i] * dot) / norms[n];
      }
    }
  });
}

template <typename T>
Var<T> cosine_triplet_loss(const Var<T>& positive, const Var<T>& anchor, const Var<T>& negative,
                           T lambda) {
  require_same(positive.shape(), anchor.shape(), "cosine_triplet_loss");
  require_same(negative.shape(), anchor.shape(), "cosine_triplet_loss");
  const int batch = anchor.shape().n;
  const std::size_t dim = anchor.value().size() / batch;
  std::vector<T> weights(batch);
  double total = 0.0;
  for (int n = 0; n < batch; ++n) {
    double cos_pos = 0.0, cos_neg = 0.0;
    for (std::size_t i = 0; i < dim; ++i) {
      const double av = anchor.value()[n * dim + i];
      cos_pos += av * positive.value()[n * dim + i];
      cos_neg += av * negative.value()[n * dim + i];
    }
    total += lambda * stable_softplus(cos_neg - cos_pos);
    weights[n] = static_cast<T>(lambda * stable_sigmoid(cos_neg - cos_pos) / batch);
  }
  Tensor<T> out(scalar_shape(), static_cast<T>(total / batch));
  return make_result<T>(std::move(out), {positive, anchor, negative},
                        [dim, weights = std::move(weights)](Node<T>& self) {
    const auto& pv = self.inputs[0]->value;
    const auto& av = self.inputs[1]->value;
    const auto& nv = self.inputs[2]->value;
    auto* gp = grad_of(self, 0);
    auto* ga = grad_of(self, 1);
    auto* gn = grad_of(self, 2);
    for (std::size_t n = 0; n < weights.size(); ++n) {
      const T k = weights[n] * self.grad[0];
      for (std::size_t i = 0; i < dim; ++i) {
        const std::size_t j = n * dim + i;
        if (gp) (*gp)[j] -= k * av[j];
        if (gn) (*gn)[j] += k * av[j];
        if (ga) (*ga)[j] += k * (nv[j] - pv[j]);
      }
    }
  });
}

// ---------------------------------------------------------------------------

#define FACEFUSE_INSTANTIATE_OPS(T)                                                              \
  template Var<T> add(const Var<T>&, const Var<T>&);                                             \
  template Var<T> sub(const Var<T>&, const Var<T>&);                                             \
  template Var<T> mul(const Var<T>&, const Var<T>&);                                             \
  template Var<T> scale(const Var<T>&, T);                                                       \
  template Var<T> add_scalar(const Var<T>&, T);                                                  \
  template Var<T> leaky_relu(const Var<T>&, T);                                                  \
  template Var<T> sigmoid(const Var<T>&);                                                        \
  template Var<T> tanh(const Var<T>&);                                                           \
  template Var<T> clamp(const Var<T>&, T, T);                                                    \
  template Var<T> conv2d(const Var<T>&, const Var<T>&, const Var<T>&, int, int);                 \
  template Var<T> linear(const Var<T>&, const Var<T>&, const Var<T>&);                           \
  template Var<T> upsample_nearest(const Var<T>&, int);                                          \
  template Var<T> concat_channels(const Var<T>&, const Var<T>&);                                 \
  template Var<T> slice_channels(const Var<T>&, int, int);                                       \
  template Var<T> reshape(const Var<T>&, Shape);                                                 \
  template Var<T> global_avg_pool(const Var<T>&);                                                \
  template Var<T> adaptive_max_pool(const Var<T>&, int, int);                                    \
  template Var<T> adaptive_avg_pool(const Var<T>&, int, int);                                    \
  template Var<T> channel_mul(const Var<T>&, const Var<T>&);                                     \
  template Var<T> warp(const Var<T>&, const Var<T>&);                                            \
  template Var<T> local_ncc_loss(const Var<T>&, const Var<T>&, int, double);                     \
  template Var<T> smoothness_loss(const Var<T>&);                                                \
  template Var<T> mean(const Var<T>&);                                                           \
  template Var<T> mean_abs_diff(const Var<T>&, const Var<T>&);                                   \
  template Var<T> softplus_mean(const Var<T>&, T);                                               \
  template Var<T> l2_normalize(const Var<T>&);                                                   \
  template Var<T> cosine_triplet_loss(const Var<T>&, const Var<T>&, const Var<T>&, T);

FACEFUSE_INSTANTIATE_OPS(float)
FACEFUSE_INSTANTIATE_OPS(double)

#undef FACEFUSE_INSTANTIATE_OPS

}  // namespace facefuse::nn
