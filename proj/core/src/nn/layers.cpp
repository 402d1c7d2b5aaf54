#include "facefuse/nn/layers.hpp"

#include <cmath>
#include <cstring>

#include "facefuse/error.hpp"

namespace facefuse::nn {

template <typename T>
Var<T> ParameterSet<T>::create(std::string name, Tensor<T> init) {
  if (find(name) != nullptr) throw InvalidArgument("duplicate parameter name " + name);
  auto var = Var<T>::parameter(std::move(init));
  entries_.emplace_back(std::move(name), var);
  return var;
}

template <typename T>
std::size_t ParameterSet<T>::scalar_count() const {
  std::size_t total = 0;
  for (const auto& [name, var] : entries_) total += var.value().size();
  return total;
}

template <typename T>
void ParameterSet<T>::zero_grad() {
  for (auto& [name, var] : entries_) var.zero_grad();
}

template <typename T>
void ParameterSet<T>::set_trainable(bool on) {
  for (auto& [name, var] : entries_) var.set_requires_grad(on);
}

template <typename T>
const Var<T>* ParameterSet<T>::find(const std::string& name) const {
  for (const auto& entry : entries_) {
    if (entry.first == name) return &entry.second;
  }
  return nullptr;
}

template <typename T>
std::uint64_t ParameterSet<T>::checksum() const {
  std::uint64_t h = 1469598103934665603ULL;
  auto mix = [&h](const void* data, std::size_t n) {
    const auto* p = static_cast<const unsigned char*>(data);
    for (std::size_t i = 0; i < n; ++i) {
      h ^= p[i];
      h *= 1099511628211ULL;
    }
  };
  for (const auto& [name, var] : entries_) {
    mix(name.data(), name.size());
    const Shape s = var.shape();
    mix(&s, sizeof(s));
    mix(var.value().data(), var.value().size() * sizeof(T));
  }
  return h;
}

template <typename T>
Tensor<T> he_uniform(Shape shape, int fan_in, Rng& rng, double slope, double gain) {
  const double bound = gain * std::sqrt(6.0 / ((1.0 + slope * slope) * fan_in));
  std::uniform_real_distribution<double> dist(-bound, bound);
  Tensor<T> out(shape);
  for (auto& v : out.values()) v = static_cast<T>(dist(rng));
  return out;
}

template <typename T>
Conv2d<T>::Conv2d(ParameterSet<T>& params, const std::string& name, int in, int out, int kernel,
                  int stride, Rng& rng, bool bias, double init_gain)
    : stride_(stride), padding_((kernel - 1) / 2) {
  if (in <= 0 || out <= 0 || kernel <= 0 || stride <= 0) {
    throw InvalidArgument("Conv2d " + name + ": non-positive geometry");
  }
  weight_ = params.create(name + ".weight",
                          he_uniform<T>(Shape{out, in, kernel, kernel}, in * kernel * kernel, rng,
                                        kLeakySlope, init_gain));
  if (bias) bias_ = params.create(name + ".bias", Tensor<T>(Shape{1, out, 1, 1}));
}

template <typename T>
Linear<T>::Linear(ParameterSet<T>& params, const std::string& name, int in, int out, Rng& rng,
                  bool bias, double init_gain) {
  if (in <= 0 || out <= 0) throw InvalidArgument("Linear " + name + ": non-positive size");
  weight_ = params.create(name + ".weight",
                          he_uniform<T>(Shape{out, in, 1, 1}, in, rng, kLeakySlope, init_gain));
  if (bias) bias_ = params.create(name + ".bias", Tensor<T>(Shape{1, out, 1, 1}));
}

template <typename T>
Adam<T>::Adam(const ParameterSet<T>& params, AdamOptions options) : options_(options) {
  if (!(options.learning_rate > 0.0)) throw InvalidArgument("Adam: learning rate must be > 0");
  for (const auto& [name, var] : params.entries()) {
    slots_.push_back(Slot{var, std::vector<double>(var.value().size(), 0.0),
                          std::vector<double>(var.value().size(), 0.0)});
  }
}

template <typename T>
void Adam<T>::step() {
  ++step_;
  const double c1 = 1.0 - std::pow(options_.beta1, static_cast<double>(step_));
  const double c2 = 1.0 - std::pow(options_.beta2, static_cast<double>(step_));
  for (auto& slot : slots_) {
    const auto& grad = slot.param.grad();
    if (grad.empty()) continue;
    auto& value = slot.param.mutable_value();
    for (std::size_t i = 0; i < value.size(); ++i) {
      const double g = grad[i];
      slot.m[i] = options_.beta1 * slot.m[i] + (1.0 - options_.beta1) * g;
      slot.v[i] = options_.beta2 * slot.v[i] + (1.0 - options_.beta2) * g * g;
      const double m_hat = slot.m[i] / c1;
      const double v_hat = slot.v[i] / c2;
      value[i] -= static_cast<T>(options_.learning_rate * m_hat / (std::sqrt(v_hat) + options_.epsilon));
    }
    slot.param.zero_grad();
  }
}

template class ParameterSet<float>;
template class ParameterSet<double>;
template class Conv2d<float>;
template class Conv2d<double>;
template class Linear<float>;
template class Linear<double>;
template class Adam<float>;
template class Adam<double>;
template Tensor<float> he_uniform<float>(Shape, int, Rng&, double, double);
template Tensor<double> he_uniform<double>(Shape, int, Rng&, double, double);

}  // namespace facefuse::nn
