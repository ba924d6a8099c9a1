#pragma once

#include <cstddef>
#include <random>
#include <string>
#include <vector>

#include "voxmend/ag/ops.hpp"
#include "voxmend/ag/params.hpp"

namespace voxmend::ag {

// 2-d convolution parameters (optionally weight-normalised) plus bias.
// Kernel layout O x C x kt x kf. Initialised U(-1/sqrt(fan_in), 1/sqrt(fan_in)).
template <typename T>
struct Conv2dLayer {
  std::size_t cin = 0, cout = 0, kt = 1, kf = 1;
  std::size_t stride_t = 1, stride_f = 1, dilation_t = 1;
  bool weight_normed = false;
  Tensor<T> w, v, g, b;

  static Conv2dLayer create(ParamStore<T>& store, const std::string& name, std::size_t cin, std::size_t cout,
                            std::size_t kt, std::size_t kf, std::mt19937_64& rng, bool weight_normed = false);
  Tensor<T> weight() const { return weight_normed ? weight_norm(v, g) : w; }
  std::size_t pad_f() const { return kf / 2; }
  std::size_t history() const { return (kt - 1) * dilation_t; }
  // Zeroes weight and bias (used for identity-style initial configurations).
  void zero();
};

// Transposed conv, kernel Cin x Cout x kt x kf, frequency upsampled by stride_f.
template <typename T>
struct ConvT2dLayer {
  std::size_t cin = 0, cout = 0, kt = 1, kf = 1, stride_f = 2;
  Tensor<T> w, b;

  static ConvT2dLayer create(ParamStore<T>& store, const std::string& name, std::size_t cin, std::size_t cout,
                             std::size_t kt, std::size_t kf, std::size_t stride_f, std::mt19937_64& rng);
  std::size_t pad_f() const { return kf / 2; }
  std::size_t history() const { return kt - 1; }
  void zero();
};

// Per-layer input history used when a causal network runs frame by frame.
// Slots are assigned in call order, which is fixed for a given network.
template <typename T>
struct StreamCache {
  std::vector<Tensor<T>> slots;
  std::size_t cursor = 0;

  void reset() {
    slots.clear();
    cursor = 0;
  }
};

// Runs causal layers either over a whole sequence (zero history, offline)
// or over new frames appended to cached history (streaming). Both paths
// compute the same outputs for the same frames.
template <typename T>
class Timeline {
 public:
  Timeline() = default;
  explicit Timeline(StreamCache<T>& cache) : cache_(&cache) { cache.cursor = 0; }

  bool streaming() const { return cache_ != nullptr; }

  // N x C x T x F -> N x O x T x F/stride_f, causal in time.
  Tensor<T> conv(const Conv2dLayer<T>& layer, const Tensor<T>& x);
  Tensor<T> conv_t(const ConvT2dLayer<T>& layer, const Tensor<T>& x);
  // N x C x T -> N x O x T; the layer is stored with kf == 1.
  Tensor<T> conv1d(const Conv2dLayer<T>& layer, const Tensor<T>& x);

 private:
  // Prepends cached history of `frames` frames along axis 2 and refreshes the cache.
  Tensor<T> with_history(const Tensor<T>& x, std::size_t frames);

  StreamCache<T>* cache_ = nullptr;
};

}  // namespace voxmend::ag
