#include "voxmend/filterbank/erb.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

#include "voxmend/error.hpp"

namespace voxmend::fb {

double hz_to_erb_rate(double hz) { return 21.4 * std::log10(1.0 + 0.00437 * hz); }
double erb_rate_to_hz(double erb) { return (std::pow(10.0, erb / 21.4) - 1.0) / 0.00437; }

ErbBank::ErbBank(std::size_t n_bands, std::size_t n_bins, double sample_rate)
    : n_bands_(n_bands), n_bins_(n_bins), band_(n_bands * n_bins, 0.0), centres_hz_(n_bands) {
  if (n_bands < 2 || n_bins < n_bands) throw ValidationError("ErbBank: need n_bins >= n_bands >= 2");
  const double nyquist = sample_rate / 2.0;
  const double top = hz_to_erb_rate(nyquist);
  std::vector<double> centre_erb(n_bands);
  for (std::size_t b = 0; b < n_bands; ++b) {
    centre_erb[b] = top * static_cast<double>(b) / static_cast<double>(n_bands - 1);
    centres_hz_[b] = erb_rate_to_hz(centre_erb[b]);
  }
  centres_hz_.back() = nyquist;
  for (std::size_t f = 0; f < n_bins; ++f) {
    const double hz = nyquist * static_cast<double>(f) / static_cast<double>(n_bins - 1);
    const double e = hz_to_erb_rate(hz);
    std::size_t b = 0;
    while (b + 2 < n_bands && centre_erb[b + 1] <= e) ++b;
    const double span = centre_erb[b + 1] - centre_erb[b];
    const double upper = std::clamp((e - centre_erb[b]) / span, 0.0, 1.0);
    band_[b * n_bins + f] = 1.0 - upper;
    band_[(b + 1) * n_bins + f] = upper;
  }
}

std::pair<std::size_t, std::size_t> ErbBank::support(std::size_t band) const {
  std::size_t first = n_bins_, last = 0;
  for (std::size_t f = 0; f < n_bins_; ++f) {
    if (band_weight(band, f) > 0.0) {
      first = std::min(first, f);
      last = f;
    }
  }
  return {first, last};
}

std::size_t ErbBank::dominant_band(std::size_t bin) const {
  std::size_t best = 0;
  for (std::size_t b = 1; b < n_bands_; ++b) {
    if (band_weight(b, bin) > band_weight(best, bin)) best = b;
  }
  return best;
}

std::string ErbBank::dump() const {
  std::ostringstream os;
  os << "# erb n_bands=" << n_bands_ << " n_bins=" << n_bins_ << "\n# band centre_hz first_bin last_bin\n";
  for (std::size_t b = 0; b < n_bands_; ++b) {
    const auto [lo, hi] = support(b);
    os << b << ' ' << centres_hz_[b] << ' ' << lo << ' ' << hi << '\n';
  }
  return os.str();
}

const ErbBank& default_erb_bank() {
  static const ErbBank bank;
  return bank;
}

std::vector<float> erb_split(const dsp::ComplexSpectrogram& spec, const ErbBank& bank) {
  if (spec.bins != bank.n_bins()) {
    throw ShapeError("erb_split: expected " + std::to_string(bank.n_bins()) + " bins, got " +
                     std::to_string(spec.bins));
  }
  std::vector<float> out(spec.frames * bank.n_bands());
  for (std::size_t t = 0; t < spec.frames; ++t) {
    for (std::size_t b = 0; b < bank.n_bands(); ++b) {
      double e = 0.0;
      for (std::size_t f = 0; f < spec.bins; ++f) {
        const double w = bank.band_weight(b, f);
        if (w != 0.0) e += w * std::norm(std::complex<double>(spec.at(t, f)));
      }
      out[t * bank.n_bands() + b] = static_cast<float>(std::log10(e + 1e-10));
    }
  }
  return out;
}

dsp::ComplexSpectrogram erb_apply_gains(const dsp::ComplexSpectrogram& spec,
                                        const std::vector<float>& gains, const ErbBank& bank) {
  if (spec.bins != bank.n_bins()) throw ShapeError("erb_apply_gains: bin count mismatch");
  if (gains.size() != spec.frames * bank.n_bands()) throw ShapeError("erb_apply_gains: gain shape mismatch");
  for (float g : gains) {
    if (!(g >= 0.0f && g <= 1.0f)) throw ValidationError("erb_apply_gains: gains must lie in [0, 1]");
  }
  dsp::ComplexSpectrogram out = spec;
  for (std::size_t t = 0; t < spec.frames; ++t) {
    for (std::size_t f = 0; f < spec.bins; ++f) {
      double g = 0.0;
      for (std::size_t b = 0; b < bank.n_bands(); ++b) g += bank.merge_weight(f, b) * gains[t * bank.n_bands() + b];
      out.at(t, f) *= static_cast<float>(g);
    }
  }
  return out;
}

}  // namespace voxmend::fb
