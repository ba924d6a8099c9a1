#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "voxmend/ag/params.hpp"
#include "voxmend/ag/tensor.hpp"

namespace voxmend::ag {

struct AdamWConfig {
  double lr = 2e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  double weight_decay = 0.01;
};

template <typename T>
struct AdamWState {
  AdamWConfig cfg;
  std::uint64_t step = 0;
  std::vector<std::vector<T>> m;
  std::vector<std::vector<T>> v;
};

// One decoupled-weight-decay Adam update with bias correction:
//   m <- b1 m + (1-b1) g,  v <- b2 v + (1-b2) g^2
//   p <- p - lr * (m_hat / (sqrt(v_hat) + eps) + wd * p)
// `grads[i]` must match `params[i]`; the state is sized on first use.
template <typename T>
void adamw_step(std::span<const Tensor<T>> params, std::span<const std::span<const T>> grads, AdamWState<T>& state);

// Steps every parameter of `store` using its accumulated gradient (missing
// gradients count as zero), then clears the gradients.
template <typename T>
void adamw_step(ParamStore<T>& store, AdamWState<T>& state);

template <typename T>
std::vector<NamedTensor> export_optimizer(const ParamStore<T>& store, const AdamWState<T>& state,
                                          const std::string& prefix);
template <typename T>
void import_optimizer(const ParamStore<T>& store, AdamWState<T>& state, const std::vector<NamedTensor>& tensors,
                      const std::string& prefix);

}  // namespace voxmend::ag
