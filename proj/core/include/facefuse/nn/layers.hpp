#pragma once

#include <cstdint>
#include <random>
#include <string>
#include <utility>
#include <vector>

#include "facefuse/nn/ops.hpp"

namespace facefuse::nn {

using Rng = std::mt19937_64;

// Named parameter registry shared by a network and its optimizer/checkpoint.
template <typename T>
class ParameterSet {
 public:
  using Entry = std::pair<std::string, Var<T>>;

  Var<T> create(std::string name, Tensor<T> init);

  const std::vector<Entry>& entries() const { return entries_; }
  std::size_t scalar_count() const;
  void zero_grad();
  void set_trainable(bool on);
  const Var<T>* find(const std::string& name) const;
  // FNV-1a over names, shapes and values; used to assert frozen weights.
  std::uint64_t checksum() const;

 private:
  std::vector<Entry> entries_;
};

// Uniform He initialization for a fan-in and leaky-ReLU slope.
template <typename T>
Tensor<T> he_uniform(Shape shape, int fan_in, Rng& rng, double slope = 0.2, double gain = 1.0);

template <typename T>
class Conv2d {
 public:
  Conv2d() = default;
  Conv2d(ParameterSet<T>& params, const std::string& name, int in, int out, int kernel, int stride,
         Rng& rng, bool bias = true, double init_gain = 1.0);

  Var<T> operator()(const Var<T>& x) const { return conv2d(x, weight_, bias_, stride_, padding_); }
  const Var<T>& weight() const { return weight_; }
  const Var<T>& bias() const { return bias_; }

 private:
  Var<T> weight_;
  Var<T> bias_;
  int stride_ = 1;
  int padding_ = 0;
};

template <typename T>
class Linear {
 public:
  Linear() = default;
  Linear(ParameterSet<T>& params, const std::string& name, int in, int out, Rng& rng,
         bool bias = true, double init_gain = 1.0);

  Var<T> operator()(const Var<T>& x) const { return linear(x, weight_, bias_); }
  const Var<T>& weight() const { return weight_; }
  const Var<T>& bias() const { return bias_; }

 private:
  Var<T> weight_;
  Var<T> bias_;
};

struct AdamOptions {
  double learning_rate = 5e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
};

template <typename T>
class Adam {
 public:
  Adam(const ParameterSet<T>& params, AdamOptions options);

  // Applies one update from the accumulated gradients, then clears them.
  void step();
  long steps() const { return step_; }

 private:
  struct Slot {
    Var<T> param;
    std::vector<double> m;
    std::vector<double> v;
  };
  std::vector<Slot> slots_;
  AdamOptions options_;
  long step_ = 0;
};

inline constexpr float kLeakySlope = 0.2f;

extern template class ParameterSet<float>;
extern template class ParameterSet<double>;
extern template class Conv2d<float>;
extern template class Conv2d<double>;
extern template class Linear<float>;
extern template class Linear<double>;
extern template class Adam<float>;
extern template class Adam<double>;

}  // namespace facefuse::nn
