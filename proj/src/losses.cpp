#include "voxmend/losses.hpp"

#include <cmath>
#include <string>

#include "voxmend/error.hpp"

namespace voxmend::losses {

using ag::Shape;

void MultiResConfig::validate() const {
  if (fft_sizes.empty()) throw ValidationError("MultiResConfig: no resolutions");
  for (auto r : fft_sizes) {
    if (r < 8 || (r & (r - 1)) != 0) {
      throw ValidationError("MultiResConfig: FFT size " + std::to_string(r) + " is not a power of two >= 8");
    }
  }
}

MultiResConfig MultiResConfig::scaled(std::size_t n) const {
  MultiResConfig out;
  out.fft_sizes.clear();
  for (auto r : fft_sizes) out.fft_sizes.push_back(r / n);
  out.validate();
  return out;
}

void LossWeights::validate() const {
  if (adv < 0 || feat < 0 || cplx < 0 || mag < 0) throw ValidationError("LossWeights: weights must be >= 0");
}

template <typename T>
Tensor<T> spectral_convergence(const Tensor<T>& x, const Tensor<T>& x_hat) {
  if (x.shape() != x_hat.shape()) throw ShapeError("spectral_convergence: shape mismatch");
  double den = 0;
  for (T v : x_hat.storage()) den += static_cast<double>(v) * v;
  if (den == 0.0) throw NumericalError("spectral_convergence: estimate has zero Frobenius norm");
  return ag::div(ag::sqrt(ag::sum(ag::square(ag::sub(x, x_hat)))), ag::sqrt(ag::sum(ag::square(x_hat))));
}

template <typename T>
Tensor<T> log_mag_l1(const Tensor<T>& x, const Tensor<T>& x_hat) {
  if (x.shape() != x_hat.shape()) throw ShapeError("log_mag_l1: shape mismatch");
  const T eps = static_cast<T>(kLogEps);
  return ag::mean(ag::abs(ag::sub(ag::log(x, eps), ag::log(x_hat, eps))));
}

template <typename T>
Tensor<T> magnitude(const Tensor<T>& wave, std::size_t fft_size, std::size_t hop) {
  return ag::complex_abs(ag::stft(wave, ag::SpectralParams{fft_size, hop}));
}

template <typename T>
Tensor<T> mrstft_loss(const Tensor<T>& s, const Tensor<T>& s_hat, const MultiResConfig& cfg) {
  cfg.validate();
  if (s.shape() != s_hat.shape() || s.dim() != 2) {
    throw ShapeError("mrstft_loss: expected equal N x L inputs, got " + ag::to_string(s.shape()) + " and " +
                     ag::to_string(s_hat.shape()));
  }
  Tensor<T> total;
  for (auto r : cfg.fft_sizes) {
    auto x = magnitude(s, r, r / 4);
    auto xh = magnitude(s_hat, r, r / 4);
    auto term = ag::add(log_mag_l1(x, xh), spectral_convergence(x, xh));
    total = total.defined() ? ag::add(total, term) : term;
  }
  return total;
}

template <typename T>
Tensor<T> pqmf_analysis(const Tensor<T>& wave, const fb::PqmfBank& bank) {
  if (wave.dim() != 2) throw ShapeError("pqmf_analysis: expected N x L input");
  const std::size_t n = wave.size(0), len = wave.size(1), m = bank.n_bands(), taps = bank.taps();
  const std::size_t out_len = (len + m - 1) / m;
  auto filters = std::make_shared<std::vector<T>>(m * taps);
  for (std::size_t k = 0; k < m; ++k)
    for (std::size_t i = 0; i < taps; ++i) (*filters)[k * taps + i] = static_cast<T>(bank.analysis(k)[i]);
  std::vector<T> out(n * m * out_len, T(0));
  const auto& x = wave.storage();
  for (std::size_t b = 0; b < n; ++b)
    for (std::size_t k = 0; k < m; ++k) {
      const T* h = filters->data() + k * taps;
      for (std::size_t j = 0; j < out_len; ++j) {
        const std::size_t pos = j * m;
        const std::size_t i_max = std::min(taps - 1, pos);
        T acc = T(0);
        for (std::size_t i = 0; i <= i_max; ++i) {
          if (pos - i < len) acc += h[i] * x[b * len + pos - i];
        }
        out[(b * m + k) * out_len + j] = acc;
      }
    }
  auto xi = wave.impl();
  return ag::make_result<T>("pqmf_analysis", Shape{n, m, out_len}, std::move(out), {xi},
                            [xi, filters, n, len, m, taps, out_len](ag::TensorImpl<T>& r) {
                              auto& g = xi->ensure_grad();
                              for (std::size_t b = 0; b < n; ++b)
                                for (std::size_t k = 0; k < m; ++k) {
                                  const T* h = filters->data() + k * taps;
                                  for (std::size_t j = 0; j < out_len; ++j) {
                                    const T go = r.grad[(b * m + k) * out_len + j];
                                    if (go == T(0)) continue;
                                    const std::size_t pos = j * m;
                                    const std::size_t i_max = std::min(taps - 1, pos);
                                    for (std::size_t i = 0; i <= i_max; ++i) {
                                      if (pos - i < len) g[b * len + pos - i] += h[i] * go;
                                    }
                                  }
                                }
                            });
}

template <typename T>
Tensor<T> subband_mrstft_loss(const Tensor<T>& s, const Tensor<T>& s_hat, const fb::PqmfBank& bank,
                              const MultiResConfig& cfg) {
  if (s.shape() != s_hat.shape()) throw ShapeError("subband_mrstft_loss: shape mismatch");
  const auto sub_cfg = cfg.scaled(bank.n_bands());
  auto bs = pqmf_analysis(s, bank);
  auto bh = pqmf_analysis(s_hat, bank);
  const std::size_t n = bs.size(0), len = bs.size(2);
  Tensor<T> total;
  for (std::size_t k = 0; k < bank.n_bands(); ++k) {
    auto a = ag::reshape(ag::slice(bs, 1, k, k + 1), Shape{n, len});
    auto b = ag::reshape(ag::slice(bh, 1, k, k + 1), Shape{n, len});
    auto term = mrstft_loss(a, b, sub_cfg);
    total = total.defined() ? ag::add(total, term) : term;
  }
  return ag::scale(total, T(1) / static_cast<T>(bank.n_bands()));
}

template <typename T>
Tensor<T> lsgan_g_loss(const std::vector<Tensor<T>>& fake_scores) {
  if (fake_scores.empty()) throw ShapeError("lsgan_g_loss: no score maps");
  Tensor<T> total;
  for (const auto& s : fake_scores) {
    auto term = ag::mean(ag::square(ag::add_scalar(ag::scale(s, T(-1)), T(1))));
    total = total.defined() ? ag::add(total, term) : term;
  }
  return ag::scale(total, T(1) / static_cast<T>(fake_scores.size()));
}

template <typename T>
Tensor<T> lsgan_d_loss(const Tensor<T>& real_scores, const Tensor<T>& fake_scores) {
  return ag::add(ag::mean(ag::square(ag::add_scalar(real_scores, T(-1)))), ag::mean(ag::square(fake_scores)));
}

template <typename T>
Tensor<T> feature_match_loss(const std::vector<Tensor<T>>& real_feats, const std::vector<Tensor<T>>& fake_feats) {
  if (real_feats.size() != fake_feats.size() || real_feats.empty()) {
    throw ShapeError("feature_match_loss: feature lists differ in length or are empty");
  }
  Tensor<T> total;
  for (std::size_t l = 0; l < real_feats.size(); ++l) {
    auto term = ag::mean(ag::abs(ag::sub(real_feats[l], fake_feats[l])));
    total = total.defined() ? ag::add(total, term) : term;
  }
  return ag::scale(total, T(1) / static_cast<T>(real_feats.size()));
}

template <typename T>
Tensor<T> feature_match_loss(const std::vector<std::vector<Tensor<T>>>& real_feats,
                             const std::vector<std::vector<Tensor<T>>>& fake_feats) {
  if (real_feats.size() != fake_feats.size() || real_feats.empty()) {
    throw ShapeError("feature_match_loss: discriminator counts differ or are zero");
  }
  Tensor<T> total;
  for (std::size_t d = 0; d < real_feats.size(); ++d) {
    auto term = feature_match_loss(real_feats[d], fake_feats[d]);
    total = total.defined() ? ag::add(total, term) : term;
  }
  return ag::scale(total, T(1) / static_cast<T>(real_feats.size()));
}

template <typename T>
Tensor<T> compressed_complex_loss(const Tensor<T>& x, const Tensor<T>& x_hat) {
  if (x.shape() != x_hat.shape()) throw ShapeError("compressed_complex_loss: shape mismatch");
  const T a = static_cast<T>(kCompress), eps = static_cast<T>(kPhaseEps);
  auto d = ag::sub(ag::complex_power(x, a, eps), ag::complex_power(x_hat, a, eps));
  // Sum of squares over (re, im) pairs divided by the number of complex entries.
  return ag::scale(ag::sum(ag::square(d)), T(2) / static_cast<T>(x.numel()));
}

template <typename T>
Tensor<T> compressed_mag_loss(const Tensor<T>& x, const Tensor<T>& x_hat) {
  if (x.shape() != x_hat.shape()) throw ShapeError("compressed_mag_loss: shape mismatch");
  const T a = static_cast<T>(kCompress);
  return ag::mean(ag::square(ag::sub(ag::pow(ag::complex_abs(x), a), ag::pow(ag::complex_abs(x_hat), a))));
}

template <typename T>
GeneratorLoss<T> generator_total_loss(Tensor<T> fullband, Tensor<T> subband, Tensor<T> adv, Tensor<T> feat,
                                      const LossWeights& w) {
  w.validate();
  GeneratorLoss<T> out{Tensor<T>(), fullband, subband, adv, feat};
  out.total = ag::add(ag::add(fullband, subband),
                      ag::add(ag::scale(adv, static_cast<T>(w.adv)), ag::scale(feat, static_cast<T>(w.feat))));
  return out;
}

template <typename T>
EnhancementLoss<T> enhancement_total_loss(Tensor<T> cplx, Tensor<T> mag, const LossWeights& w) {
  w.validate();
  EnhancementLoss<T> out{Tensor<T>(), cplx, mag};
  out.total = ag::add(ag::scale(cplx, static_cast<T>(w.cplx)), ag::scale(mag, static_cast<T>(w.mag)));
  return out;
}

#define VOXMEND_INSTANTIATE(T)                                                                                  \
  template Tensor<T> spectral_convergence(const Tensor<T>&, const Tensor<T>&);                                  \
  template Tensor<T> log_mag_l1(const Tensor<T>&, const Tensor<T>&);                                            \
  template Tensor<T> magnitude(const Tensor<T>&, std::size_t, std::size_t);                                     \
  template Tensor<T> mrstft_loss(const Tensor<T>&, const Tensor<T>&, const MultiResConfig&);                    \
  template Tensor<T> pqmf_analysis(const Tensor<T>&, const fb::PqmfBank&);                                      \
  template Tensor<T> subband_mrstft_loss(const Tensor<T>&, const Tensor<T>&, const fb::PqmfBank&,               \
                                         const MultiResConfig&);                                                \
  template Tensor<T> lsgan_g_loss(const std::vector<Tensor<T>>&);                                               \
  template Tensor<T> lsgan_d_loss(const Tensor<T>&, const Tensor<T>&);                                          \
  template Tensor<T> feature_match_loss(const std::vector<Tensor<T>>&, const std::vector<Tensor<T>>&);          \
  template Tensor<T> feature_match_loss(const std::vector<std::vector<Tensor<T>>>&,                             \
                                        const std::vector<std::vector<Tensor<T>>>&);                            \
  template Tensor<T> compressed_complex_loss(const Tensor<T>&, const Tensor<T>&);                               \
  template Tensor<T> compressed_mag_loss(const Tensor<T>&, const Tensor<T>&);                                   \
  template GeneratorLoss<T> generator_total_loss(Tensor<T>, Tensor<T>, Tensor<T>, Tensor<T>, const LossWeights&); \
  template EnhancementLoss<T> enhancement_total_loss(Tensor<T>, Tensor<T>, const LossWeights&);

VOXMEND_INSTANTIATE(float)
VOXMEND_INSTANTIATE(double)

}  // namespace voxmend::losses
