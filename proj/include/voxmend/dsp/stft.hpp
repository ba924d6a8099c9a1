#pragma once

#include <complex>
#include <cstddef>
#include <optional>
#include <span>
#include <vector>

#include "voxmend/dsp/waveform.hpp"

namespace voxmend::dsp {

// Analysis/synthesis parameters. The default is a 20 ms periodic Hann window
// with a 10 ms hop and no zero padding: 481 bins at 50 Hz spacing.
struct StftConfig {
  std::size_t win_len = 960;
  std::size_t hop = 480;
  std::size_t fft_size = 960;
  std::vector<double> window;

  static StftConfig standard();
  static StftConfig make(std::size_t win_len, std::size_t fft_size);

  std::size_t bins() const { return fft_size / 2 + 1; }
  // Throws ValidationError unless hop == win_len/2 and the window is COLA.
  void validate() const;
};

// Periodic Hann window, w[n] = 0.5 - 0.5 cos(2 pi n / n_total).
std::vector<double> hann_periodic(std::size_t n);

struct ComplexSpectrogram {
  std::size_t frames = 0;
  std::size_t bins = 0;
  std::vector<std::complex<float>> data;  // frame-major

  ComplexSpectrogram() = default;
  ComplexSpectrogram(std::size_t t, std::size_t k)
      : frames(t), bins(k), data(t * k) {}

  std::complex<float>& at(std::size_t t, std::size_t k) { return data[t * bins + k]; }
  const std::complex<float>& at(std::size_t t, std::size_t k) const { return data[t * bins + k]; }
  std::span<std::complex<float>> frame(std::size_t t) { return {data.data() + t * bins, bins}; }
  std::span<const std::complex<float>> frame(std::size_t t) const {
    return {data.data() + t * bins, bins};
  }
};

// Number of frames needed so every sample of an n-sample signal is covered.
std::size_t frame_count(std::size_t n_samples, const StftConfig& cfg);

// Frame t covers samples [t*hop, t*hop + win_len); the tail is zero padded.
ComplexSpectrogram stft(const Waveform& wave, const StftConfig& cfg);

// Weighted overlap-add with squared-window normalisation. The output has
// (frames-1)*hop + win_len samples unless `length` asks for a trim/pad.
Waveform istft(const ComplexSpectrogram& spec, const StftConfig& cfg,
               std::optional<std::size_t> length = std::nullopt);

// Single-frame building blocks shared by the offline and streaming paths.
void analyze_frame(std::span<const float> frame, const StftConfig& cfg,
                   std::span<std::complex<float>> out);
// Writes the synthesis-windowed time frame (win_len samples) into `out`.
void synthesize_frame(std::span<const std::complex<float>> bins, const StftConfig& cfg,
                      std::span<double> out);

// Below this summed squared window, the normaliser is clamped.
inline constexpr double kWindowSumFloor = 1e-2;

}  // namespace voxmend::dsp
