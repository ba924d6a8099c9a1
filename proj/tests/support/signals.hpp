#pragma once

#include <cmath>
#include <complex>
#include <filesystem>
#include <numbers>
#include <random>
#include <vector>

#include "voxmend/dsp/waveform.hpp"

namespace testsupport {

inline std::vector<float> white_noise(std::size_t n, std::uint64_t seed, float amp = 0.5f) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<float> d(-amp, amp);
  std::vector<float> x(n);
  for (auto& v : x) v = d(rng);
  return x;
}

inline std::vector<float> sine(std::size_t n, double hz, double amp = 1.0, double rate = 48000.0) {
  std::vector<float> x(n);
  for (std::size_t i = 0; i < n; ++i) {
    x[i] = static_cast<float>(amp * std::sin(2 * std::numbers::pi * hz * static_cast<double>(i) / rate));
  }
  return x;
}

inline double energy(std::span<const float> x) {
  double e = 0;
  for (float v : x) e += static_cast<double>(v) * v;
  return e;
}

// Direct O(N^2) DFT bin of a real sequence.
inline std::complex<double> dft_bin(std::span<const double> x, std::size_t k) {
  std::complex<double> acc = 0;
  const double n = static_cast<double>(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) {
    acc += x[i] * std::polar(1.0, -2 * std::numbers::pi * static_cast<double>(k * i) / n);
  }
  return acc;
}

inline std::filesystem::path fixture(const char* name) { return std::filesystem::path(VOXMEND_FIXTURE_DIR) / name; }

}  // namespace testsupport
