#include "voxmend/dsp/stft.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <string>

#include "voxmend/dsp/fft.hpp"
#include "voxmend/error.hpp"

namespace voxmend::dsp {

std::vector<double> hann_periodic(std::size_t n) {
  std::vector<double> w(n);
  for (std::size_t i = 0; i < n; ++i) {
    w[i] = 0.5 - 0.5 * std::cos(2.0 * std::numbers::pi * static_cast<double>(i) / static_cast<double>(n));
  }
  return w;
}

StftConfig StftConfig::standard() { return make(960, 960); }

StftConfig StftConfig::make(std::size_t win_len, std::size_t fft_size) {
  StftConfig cfg;
  cfg.win_len = win_len;
  cfg.hop = win_len / 2;
  cfg.fft_size = fft_size;
  cfg.window = hann_periodic(win_len);
  cfg.validate();
  return cfg;
}

void StftConfig::validate() const {
  if (win_len == 0 || hop * 2 != win_len) {
    throw ValidationError("StftConfig: hop must be win_len/2");
  }
  if (fft_size < win_len || fft_size % 2 != 0) {
    throw ValidationError("StftConfig: fft_size must be even and >= win_len");
  }
  if (window.size() != win_len) {
    throw ValidationError("StftConfig: window length mismatch");
  }
  for (std::size_t n = 0; n < hop; ++n) {
    if (std::abs(window[n] + window[n + hop] - 1.0) > 1e-10) {
      throw ValidationError("StftConfig: window is not COLA at hop " + std::to_string(hop));
    }
  }
}

std::size_t frame_count(std::size_t n_samples, const StftConfig& cfg) {
  if (n_samples <= cfg.win_len) return 1;
  return 1 + (n_samples - cfg.win_len + cfg.hop - 1) / cfg.hop;
}

void analyze_frame(std::span<const float> frame, const StftConfig& cfg,
                   std::span<std::complex<float>> out) {
  thread_local std::vector<double> buf;
  thread_local std::vector<std::complex<double>> spec;
  buf.assign(cfg.fft_size, 0.0);
  spec.resize(cfg.bins());
  const std::size_t n = std::min(frame.size(), cfg.win_len);
  for (std::size_t i = 0; i < n; ++i) buf[i] = cfg.window[i] * frame[i];
  rfft(buf.data(), spec.data(), cfg.fft_size);
  for (std::size_t k = 0; k < cfg.bins(); ++k) {
    out[k] = {static_cast<float>(spec[k].real()), static_cast<float>(spec[k].imag())};
  }
}

void synthesize_frame(std::span<const std::complex<float>> bins, const StftConfig& cfg,
                      std::span<double> out) {
  thread_local std::vector<std::complex<double>> spec;
  thread_local std::vector<double> buf;
  spec.resize(cfg.bins());
  buf.resize(cfg.fft_size);
  for (std::size_t k = 0; k < cfg.bins(); ++k) spec[k] = {bins[k].real(), bins[k].imag()};
  irfft(spec.data(), buf.data(), cfg.fft_size);
  for (std::size_t i = 0; i < cfg.win_len; ++i) out[i] = cfg.window[i] * buf[i];
}

ComplexSpectrogram stft(const Waveform& wave, const StftConfig& cfg) {
  const std::size_t n_frames = frame_count(wave.size(), cfg);
  ComplexSpectrogram spec(n_frames, cfg.bins());
  std::vector<float> frame(cfg.win_len);
  for (std::size_t t = 0; t < n_frames; ++t) {
    const std::size_t start = t * cfg.hop;
    std::fill(frame.begin(), frame.end(), 0.0f);
    if (start < wave.size()) {
      const std::size_t n = std::min(cfg.win_len, wave.size() - start);
      std::copy_n(wave.samples.begin() + static_cast<std::ptrdiff_t>(start), n, frame.begin());
    }
    analyze_frame(frame, cfg, spec.frame(t));
  }
  return spec;
}

Waveform istft(const ComplexSpectrogram& spec, const StftConfig& cfg,
               std::optional<std::size_t> length) {
  if (spec.bins != cfg.bins()) {
    throw ShapeError("istft: expected " + std::to_string(cfg.bins()) + " bins, got " +
                     std::to_string(spec.bins));
  }
  const std::size_t full = spec.frames == 0 ? 0 : (spec.frames - 1) * cfg.hop + cfg.win_len;
  std::vector<double> acc(full, 0.0);
  std::vector<double> norm(full, 0.0);
  std::vector<double> frame(cfg.win_len);
  for (std::size_t t = 0; t < spec.frames; ++t) {
    synthesize_frame(spec.frame(t), cfg, frame);
    const std::size_t start = t * cfg.hop;
    for (std::size_t i = 0; i < cfg.win_len; ++i) {
      acc[start + i] += frame[i];
      norm[start + i] += cfg.window[i] * cfg.window[i];
    }
  }
  const std::size_t out_len = length.value_or(full);
  std::vector<float> out(out_len, 0.0f);
  for (std::size_t i = 0; i < std::min(out_len, full); ++i) {
    out[i] = static_cast<float>(acc[i] / std::max(norm[i], kWindowSumFloor));
  }
  return Waveform(std::move(out));
}

}  // namespace voxmend::dsp
