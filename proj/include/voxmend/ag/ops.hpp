#pragma once

#include <cstddef>
#include <memory>
#include <vector>

#include "voxmend/ag/tensor.hpp"

namespace voxmend::ag {

// ---- elementwise (operands must have identical shapes) ----
template <typename T> Tensor<T> add(const Tensor<T>& a, const Tensor<T>& b);
template <typename T> Tensor<T> sub(const Tensor<T>& a, const Tensor<T>& b);
template <typename T> Tensor<T> mul(const Tensor<T>& a, const Tensor<T>& b);
template <typename T> Tensor<T> div(const Tensor<T>& a, const Tensor<T>& b);
template <typename T> Tensor<T> scale(const Tensor<T>& a, T factor);
template <typename T> Tensor<T> add_scalar(const Tensor<T>& a, T value);
template <typename T> Tensor<T> leaky_relu(const Tensor<T>& a, T slope = T(0.2));
template <typename T> Tensor<T> sigmoid(const Tensor<T>& a);
template <typename T> Tensor<T> tanh(const Tensor<T>& a);
template <typename T> Tensor<T> square(const Tensor<T>& a);
// d|x|/dx is taken as 0 at x == 0.
template <typename T> Tensor<T> abs(const Tensor<T>& a);
// log(x + eps)
template <typename T> Tensor<T> log(const Tensor<T>& a, T eps = T(0));
// The derivative at 0 is defined as 0 (the subgradient a norm needs at its optimum).
template <typename T> Tensor<T> sqrt(const Tensor<T>& a);
// x^e for x >= 0; derivative at 0 taken as 0.
template <typename T> Tensor<T> pow(const Tensor<T>& a, T e);

// ---- reductions to a scalar ----
template <typename T> Tensor<T> sum(const Tensor<T>& a);
template <typename T> Tensor<T> mean(const Tensor<T>& a);

// ---- layout ----
template <typename T> Tensor<T> reshape(const Tensor<T>& a, Shape shape);
template <typename T> Tensor<T> permute(const Tensor<T>& a, const std::vector<std::size_t>& perm);
template <typename T> Tensor<T> slice(const Tensor<T>& a, std::size_t axis, std::size_t begin, std::size_t end);
template <typename T> Tensor<T> concat(const std::vector<Tensor<T>>& parts, std::size_t axis);

// Multiplies the trailing axis by a constant matrix: out[..., j] = sum_k m[j, k] a[..., k].
template <typename T>
Tensor<T> linear_map(const Tensor<T>& a, std::shared_ptr<const std::vector<T>> matrix, std::size_t out_dim);

// ---- convolution ----
// Input N x C x T x F, kernel O x C x kt x kf. Time padding is asymmetric so
// causal layers pad kt-1 (times dilation) frames in front and none behind.
struct Conv2dParams {
  std::size_t stride_t = 1;
  std::size_t stride_f = 1;
  std::size_t pad_t_before = 0;
  std::size_t pad_t_after = 0;
  std::size_t pad_f = 0;
  std::size_t dilation_t = 1;
};

template <typename T>
Tensor<T> conv2d(const Tensor<T>& x, const Tensor<T>& w, const Tensor<T>& bias, const Conv2dParams& p);

// Kernel Cin x Cout x kt x kf. The frequency axis is upsampled by stride_f
// (the adjoint of a strided conv2d); the time axis stays causal: output frame
// t reads input frames t-kt+1 .. t. Output shape N x Cout x T x (F * stride_f).
template <typename T>
Tensor<T> conv_transpose2d(const Tensor<T>& x, const Tensor<T>& w, const Tensor<T>& bias,
                           std::size_t stride_f, std::size_t pad_f);

// Causal dilated conv over time: input N x C x T, kernel O x C x k,
// output frame t reads t, t-d, ..., t-(k-1)d.
template <typename T>
Tensor<T> conv1d(const Tensor<T>& x, const Tensor<T>& w, const Tensor<T>& bias, std::size_t dilation,
                 std::size_t pad_before);

// w = g * v / ||v|| with one norm per output channel (axis 0).
template <typename T> Tensor<T> weight_norm(const Tensor<T>& v, const Tensor<T>& g);

// ---- complex tensors: trailing axis of size 2 holds (re, im) ----
template <typename T> Tensor<T> complex_abs(const Tensor<T>& z);
// |z|^a * z / (|z| + eps); gradient taken as 0 where |z| == 0.
template <typename T> Tensor<T> complex_power(const Tensor<T>& z, T a, T eps);
// z * g with g shaped like z without the trailing axis.
template <typename T> Tensor<T> scale_complex(const Tensor<T>& z, const Tensor<T>& g);

// ---- spectral ----
struct SpectralParams {
  std::size_t n_fft = 960;
  std::size_t hop = 480;
};

// x: N x L -> N x frames x (n_fft/2+1) x 2, periodic Hann, frames padded to cover L.
template <typename T> Tensor<T> stft(const Tensor<T>& x, const SpectralParams& p);
// z: N x frames x bins x 2 -> N x length, squared-window normalised overlap-add.
template <typename T> Tensor<T> istft(const Tensor<T>& z, const SpectralParams& p, std::size_t length);

}  // namespace voxmend::ag
