#include <algorithm>
#include <complex>
#include <string>

#include "voxmend/ag/ops.hpp"
#include "voxmend/dsp/fft.hpp"
#include "voxmend/dsp/stft.hpp"
#include "voxmend/error.hpp"

namespace voxmend::ag {
namespace {

void check_params(const SpectralParams& p) {
  if (p.n_fft < 2 || p.n_fft % 2 != 0 || p.hop == 0 || p.hop > p.n_fft) {
    throw ShapeError("spectral op: n_fft must be even and hop in (0, n_fft], got n_fft=" + std::to_string(p.n_fft) +
                     " hop=" + std::to_string(p.hop));
  }
}

std::size_t frames_for(std::size_t len, const SpectralParams& p) {
  if (len <= p.n_fft) return 1;
  return 1 + (len - p.n_fft + p.hop - 1) / p.hop;
}

template <typename T>
std::shared_ptr<const std::vector<T>> window_for(std::size_t n) {
  auto w = dsp::hann_periodic(n);
  return std::make_shared<const std::vector<T>>(w.begin(), w.end());
}

}  // namespace

template <typename T>
Tensor<T> stft(const Tensor<T>& x, const SpectralParams& p) {
  check_params(p);
  if (x.dim() != 2) throw ShapeError("stft: expected N x L input, got " + to_string(x.shape()));
  const std::size_t n = x.size(0), len = x.size(1), nfft = p.n_fft, hop = p.hop, bins = nfft / 2 + 1;
  const std::size_t frames = frames_for(len, p);
  auto win = window_for<T>(nfft);
  std::vector<T> out(n * frames * bins * 2);
  std::vector<T> buf(nfft);
  for (std::size_t b = 0; b < n; ++b) {
    const T* xs = x.storage().data() + b * len;
    for (std::size_t t = 0; t < frames; ++t) {
      const std::size_t start = t * hop;
      for (std::size_t i = 0; i < nfft; ++i) buf[i] = start + i < len ? (*win)[i] * xs[start + i] : T(0);
      auto* dst = reinterpret_cast<std::complex<T>*>(out.data() + ((b * frames + t) * bins) * 2);
      dsp::rfft(buf.data(), dst, nfft);
    }
  }
  auto xi = x.impl();
  return make_result<T>("stft", Shape{n, frames, bins, 2}, std::move(out), {xi},
                        [xi, win, n, len, frames, nfft, hop, bins](TensorImpl<T>& r) {
                          auto& g = xi->ensure_grad();
                          std::vector<std::complex<T>> h(bins);
                          std::vector<T> du(nfft);
                          for (std::size_t b = 0; b < n; ++b) {
                            for (std::size_t t = 0; t < frames; ++t) {
                              const auto* gz = reinterpret_cast<const std::complex<T>*>(
                                  r.grad.data() + ((b * frames + t) * bins) * 2);
                              for (std::size_t k = 0; k < bins; ++k) {
                                h[k] = (k == 0 || k == bins - 1) ? gz[k] : gz[k] * T(0.5);
                              }
                              dsp::irfft(h.data(), du.data(), nfft);
                              const std::size_t start = t * hop;
                              const T scale_n = static_cast<T>(nfft);
                              for (std::size_t i = 0; i < nfft && start + i < len; ++i) {
                                g[b * len + start + i] += scale_n * du[i] * (*win)[i];
                              }
                            }
                          }
                        });
}

template <typename T>
Tensor<T> istft(const Tensor<T>& z, const SpectralParams& p, std::size_t length) {
  check_params(p);
  const std::size_t nfft = p.n_fft, hop = p.hop, bins = nfft / 2 + 1;
  if (z.dim() != 4 || z.size(2) != bins || z.size(3) != 2) {
    throw ShapeError("istft: expected N x frames x " + std::to_string(bins) + " x 2, got " + to_string(z.shape()));
  }
  const std::size_t n = z.size(0), frames = z.size(1);
  const std::size_t full = (frames - 1) * hop + nfft;
  auto win = window_for<T>(nfft);
  auto den = std::make_shared<std::vector<T>>(full, T(0));
  for (std::size_t t = 0; t < frames; ++t) {
    for (std::size_t i = 0; i < nfft; ++i) (*den)[t * hop + i] += (*win)[i] * (*win)[i];
  }
  for (auto& d : *den) d = std::max(d, static_cast<T>(dsp::kWindowSumFloor));
  std::vector<T> out(n * length, T(0));
  std::vector<T> acc(full);
  std::vector<T> v(nfft);
  for (std::size_t b = 0; b < n; ++b) {
    std::fill(acc.begin(), acc.end(), T(0));
    for (std::size_t t = 0; t < frames; ++t) {
      const auto* src = reinterpret_cast<const std::complex<T>*>(z.storage().data() + ((b * frames + t) * bins) * 2);
      dsp::irfft(src, v.data(), nfft);
      for (std::size_t i = 0; i < nfft; ++i) acc[t * hop + i] += (*win)[i] * v[i];
    }
    for (std::size_t i = 0; i < std::min(length, full); ++i) out[b * length + i] = acc[i] / (*den)[i];
  }
  auto zi = z.impl();
  return make_result<T>("istft", Shape{n, length}, std::move(out), {zi},
                        [zi, win, den, n, frames, nfft, hop, bins, length, full](TensorImpl<T>& r) {
                          auto& g = zi->ensure_grad();
                          std::vector<T> dv(nfft);
                          std::vector<std::complex<T>> dz(bins);
                          const T inv_n = T(1) / static_cast<T>(nfft);
                          const std::size_t used = std::min(length, full);
                          for (std::size_t b = 0; b < n; ++b) {
                            const T* dy = r.grad.data() + b * length;
                            for (std::size_t t = 0; t < frames; ++t) {
                              const std::size_t start = t * hop;
                              for (std::size_t i = 0; i < nfft; ++i) {
                                const std::size_t m = start + i;
                                dv[i] = m < used ? (*win)[i] * dy[m] / (*den)[m] : T(0);
                              }
                              dsp::rfft(dv.data(), dz.data(), nfft);
                              T* gz = g.data() + ((b * frames + t) * bins) * 2;
                              for (std::size_t k = 0; k < bins; ++k) {
                                const bool edge = k == 0 || k == bins - 1;
                                const T c = edge ? inv_n : T(2) * inv_n;
                                gz[2 * k] += c * dz[k].real();
                                if (!edge) gz[2 * k + 1] += c * dz[k].imag();
                              }
                            }
                          }
                        });
}

template Tensor<float> stft(const Tensor<float>&, const SpectralParams&);
template Tensor<double> stft(const Tensor<double>&, const SpectralParams&);
template Tensor<float> istft(const Tensor<float>&, const SpectralParams&, std::size_t);
template Tensor<double> istft(const Tensor<double>&, const SpectralParams&, std::size_t);

}  // namespace voxmend::ag
