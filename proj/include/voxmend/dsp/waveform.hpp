#pragma once

#include <cstddef>
#include <span>
#include <vector>

namespace voxmend::dsp {

inline constexpr int kSampleRate = 48000;

// Mono sample sequence. Everything inside the library runs at 48 kHz; other
// rates only exist transiently while a file is being ingested.
struct Waveform {
  std::vector<float> samples;
  int sample_rate = kSampleRate;

  Waveform() = default;
  explicit Waveform(std::vector<float> s, int rate = kSampleRate)
      : samples(std::move(s)), sample_rate(rate) {}

  std::size_t size() const { return samples.size(); }
  bool empty() const { return samples.empty(); }
  double duration_seconds() const {
    return static_cast<double>(samples.size()) / sample_rate;
  }
  std::span<const float> view() const { return samples; }
};

// Throws ValidationError unless the waveform is non-empty, finite and at 48 kHz.
void validate(const Waveform& wave);

bool all_finite(std::span<const float> x);

}  // namespace voxmend::dsp
