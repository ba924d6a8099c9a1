#pragma once

#include <cstddef>
#include <vector>

#include "voxmend/dsp/stft.hpp"

namespace voxmend::fb {

inline constexpr std::size_t kSplitBands = 3;
inline constexpr std::size_t kSplitBins = 160;
inline constexpr std::size_t kSplitChannels = 2 * kSplitBands;

// frames x 160 x 6 real tensor; channel 2g is the real part of group g and
// 2g+1 its imaginary part, group g covering bins [160g, 160g + 160).
struct BandStack {
  std::size_t frames = 0;
  std::vector<float> data;

  float& at(std::size_t t, std::size_t f, std::size_t c) { return data[(t * kSplitBins + f) * kSplitChannels + c]; }
  float at(std::size_t t, std::size_t f, std::size_t c) const {
    return data[(t * kSplitBins + f) * kSplitChannels + c];
  }
};

// Drops the Nyquist bin and stacks three equal contiguous groups.
BandStack split3(const dsp::ComplexSpectrogram& spec);

// Inverse of split3; the Nyquist bin comes back as zero.
dsp::ComplexSpectrogram merge3(const BandStack& stack);

}  // namespace voxmend::fb
