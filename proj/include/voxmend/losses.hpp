#pragma once

#include <cstddef>
#include <vector>

#include "voxmend/ag/ops.hpp"
#include "voxmend/filterbank/pqmf.hpp"

namespace voxmend::losses {

using ag::Tensor;

inline constexpr double kLogEps = 1e-5;
inline constexpr double kPhaseEps = 1e-10;
inline constexpr double kCompress = 0.3;

// FFT sizes with hop = fft / 4 and periodic Hann windows.
struct MultiResConfig {
  std::vector<std::size_t> fft_sizes{512, 1024, 2048};

  void validate() const;  // powers of two, at least 8
  // Resolutions for decimated subband signals (each size divided by n).
  MultiResConfig scaled(std::size_t n) const;
};

struct LossWeights {
  double adv = 1.0;
  double feat = 20.0;
  double cplx = 0.5;
  double mag = 0.5;

  void validate() const;
};

// ||X - Xh||_F / ||Xh||_F; the estimate normalises. Zero ||Xh|| raises NumericalError.
template <typename T> Tensor<T> spectral_convergence(const Tensor<T>& x, const Tensor<T>& x_hat);
// mean |log(X + eps) - log(Xh + eps)|
template <typename T> Tensor<T> log_mag_l1(const Tensor<T>& x, const Tensor<T>& x_hat);

// |STFT| of each row of an N x L batch: N x frames x (fft/2+1).
template <typename T> Tensor<T> magnitude(const Tensor<T>& wave, std::size_t fft_size, std::size_t hop);

// Sum over resolutions of log-magnitude L1 plus spectral convergence.
// `s` is the reference and `s_hat` the estimate, both N x L.
template <typename T> Tensor<T> mrstft_loss(const Tensor<T>& s, const Tensor<T>& s_hat, const MultiResConfig& cfg);

// Causal PQMF analysis as a graph op: N x L -> N x bands x ceil(L / bands).
template <typename T> Tensor<T> pqmf_analysis(const Tensor<T>& wave, const fb::PqmfBank& bank);

// mrstft_loss averaged over the PQMF subband pairs at resolutions cfg / n_bands.
template <typename T>
Tensor<T> subband_mrstft_loss(const Tensor<T>& s, const Tensor<T>& s_hat, const fb::PqmfBank& bank,
                              const MultiResConfig& cfg);

// Mean over maps of mean (1 - score)^2.
template <typename T> Tensor<T> lsgan_g_loss(const std::vector<Tensor<T>>& fake_scores);
// mean (real - 1)^2 + mean fake^2 for one discriminator.
template <typename T> Tensor<T> lsgan_d_loss(const Tensor<T>& real_scores, const Tensor<T>& fake_scores);

// (1/L) sum_l mean |real_l - fake_l| for one discriminator.
template <typename T>
Tensor<T> feature_match_loss(const std::vector<Tensor<T>>& real_feats, const std::vector<Tensor<T>>& fake_feats);
// The per-discriminator value averaged over discriminators.
template <typename T>
Tensor<T> feature_match_loss(const std::vector<std::vector<Tensor<T>>>& real_feats,
                             const std::vector<std::vector<Tensor<T>>>& fake_feats);

// Complex tensors carry (re, im) on the trailing axis.
// mean over complex entries of |c(X) - c(Xh)|^2 with c(Z) = |Z|^0.3 Z / (|Z| + 1e-10)
template <typename T> Tensor<T> compressed_complex_loss(const Tensor<T>& x, const Tensor<T>& x_hat);
// mean (|X|^0.3 - |Xh|^0.3)^2
template <typename T> Tensor<T> compressed_mag_loss(const Tensor<T>& x, const Tensor<T>& x_hat);

template <typename T>
struct GeneratorLoss {
  Tensor<T> total, fullband, subband, adv, feat;
};

template <typename T>
struct EnhancementLoss {
  Tensor<T> total, cplx, mag;
};

// fullband + subband + w.adv * adv + w.feat * feat
template <typename T>
GeneratorLoss<T> generator_total_loss(Tensor<T> fullband, Tensor<T> subband, Tensor<T> adv, Tensor<T> feat,
                                      const LossWeights& w);
// w.cplx * cplx + w.mag * mag
template <typename T>
EnhancementLoss<T> enhancement_total_loss(Tensor<T> cplx, Tensor<T> mag, const LossWeights& w);

}  // namespace voxmend::losses
