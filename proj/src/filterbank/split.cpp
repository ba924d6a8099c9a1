#include "voxmend/filterbank/split.hpp"

#include <string>

#include "voxmend/error.hpp"

namespace voxmend::fb {

BandStack split3(const dsp::ComplexSpectrogram& spec) {
  if (spec.bins != kSplitBands * kSplitBins + 1) {
    throw ShapeError("split3: expected 481 bins, got " + std::to_string(spec.bins));
  }
  BandStack out;
  out.frames = spec.frames;
  out.data.resize(spec.frames * kSplitBins * kSplitChannels);
  for (std::size_t t = 0; t < spec.frames; ++t) {
    for (std::size_t g = 0; g < kSplitBands; ++g) {
      for (std::size_t f = 0; f < kSplitBins; ++f) {
        const auto z = spec.at(t, g * kSplitBins + f);
        out.at(t, f, 2 * g) = z.real();
        out.at(t, f, 2 * g + 1) = z.imag();
      }
    }
  }
  return out;
}

dsp::ComplexSpectrogram merge3(const BandStack& stack) {
  if (stack.data.size() != stack.frames * kSplitBins * kSplitChannels) {
    throw ShapeError("merge3: expected frames x 160 x 6 data");
  }
  dsp::ComplexSpectrogram out(stack.frames, kSplitBands * kSplitBins + 1);
  for (std::size_t t = 0; t < stack.frames; ++t) {
    for (std::size_t g = 0; g < kSplitBands; ++g) {
      for (std::size_t f = 0; f < kSplitBins; ++f) {
        out.at(t, g * kSplitBins + f) = {stack.at(t, f, 2 * g), stack.at(t, f, 2 * g + 1)};
      }
    }
  }
  return out;
}

}  // namespace voxmend::fb
