#pragma once

#include "facefuse/nn/autograd.hpp"

// Differentiable operators over NCHW tensors. Every op is instantiated for
// float (training) and double (gradient checks).
namespace facefuse::nn {

template <typename T> Var<T> add(const Var<T>& a, const Var<T>& b);
template <typename T> Var<T> sub(const Var<T>& a, const Var<T>& b);
template <typename T> Var<T> mul(const Var<T>& a, const Var<T>& b);
template <typename T> Var<T> scale(const Var<T>& a, T factor);
template <typename T> Var<T> add_scalar(const Var<T>& a, T offset);

template <typename T> Var<T> leaky_relu(const Var<T>& x, T slope);
template <typename T> Var<T> sigmoid(const Var<T>& x);
template <typename T> Var<T> tanh(const Var<T>& x);
// Gradient passes only where lo <= x <= hi.
template <typename T> Var<T> clamp(const Var<T>& x, T lo, T hi);

// weight: (out, in, k, k); bias: (1, out, 1, 1) or undefined.
template <typename T>
Var<T> conv2d(const Var<T>& x, const Var<T>& weight, const Var<T>& bias, int stride, int padding);

// x flattened per sample to (n, in); weight: (out, in, 1, 1); bias: (1, out, 1, 1) or undefined.
template <typename T> Var<T> linear(const Var<T>& x, const Var<T>& weight, const Var<T>& bias);

template <typename T> Var<T> upsample_nearest(const Var<T>& x, int factor);
template <typename T> Var<T> concat_channels(const Var<T>& a, const Var<T>& b);
template <typename T> Var<T> slice_channels(const Var<T>& x, int begin, int count);
template <typename T> Var<T> reshape(const Var<T>& x, Shape shape);

template <typename T> Var<T> global_avg_pool(const Var<T>& x);
// Bin i covers [floor(i*H/out), ceil((i+1)*H/out)).
template <typename T> Var<T> adaptive_max_pool(const Var<T>& x, int out_h, int out_w);
template <typename T> Var<T> adaptive_avg_pool(const Var<T>& x, int out_h, int out_w);

// weights: (n, c, 1, 1) or (1, c, 1, 1); scales each channel of x.
template <typename T> Var<T> channel_mul(const Var<T>& x, const Var<T>& weights);

// out(p) = bilinear sample of img at p + field(p), clamped to the border.
// field channel 0 is dx, channel 1 is dy.
template <typename T> Var<T> warp(const Var<T>& img, const Var<T>& field);

// Negative mean squared local normalized cross-correlation over window x window
// neighbourhoods (clipped at the border), averaged over batch and channels.
template <typename T>
Var<T> local_ncc_loss(const Var<T>& a, const Var<T>& b, int window, double eps = 1e-5);

// Mean over positions with both forward neighbours of the squared forward
// differences of both displacement components.
template <typename T> Var<T> smoothness_loss(const Var<T>& field);

template <typename T> Var<T> mean(const Var<T>& x);
template <typename T> Var<T> mean_abs_diff(const Var<T>& a, const Var<T>& b);
// mean(softplus(sign * x))
template <typename T> Var<T> softplus_mean(const Var<T>& x, T sign);

// Per-sample L2 normalization over all non-batch dimensions.
template <typename T> Var<T> l2_normalize(const Var<T>& x);
// Batch mean of lambda * softplus(n.a - p.a) over already-normalized rows.
template <typename T>
Var<T> cosine_triplet_loss(const Var<T>& positive, const Var<T>& anchor, const Var<T>& negative,
                           T lambda);

}  // namespace facefuse::nn
