#pragma once

#include <cstddef>
#include <string>
#include <vector>

#include "voxmend/dsp/stft.hpp"

namespace voxmend::fb {

double hz_to_erb_rate(double hz);
double erb_rate_to_hz(double erb);

// Triangular bands whose centres are equally spaced on the ERB-rate scale
// between 0 Hz and Nyquist. Every bin's weights sum to one, so the merge
// matrix is simply the transpose of the band matrix.
class ErbBank {
 public:
  explicit ErbBank(std::size_t n_bands = 32, std::size_t n_bins = 481, double sample_rate = 48000.0);

  std::size_t n_bands() const { return n_bands_; }
  std::size_t n_bins() const { return n_bins_; }
  double band_weight(std::size_t band, std::size_t bin) const { return band_[band * n_bins_ + bin]; }
  double merge_weight(std::size_t bin, std::size_t band) const { return band_[band * n_bins_ + bin]; }
  const std::vector<double>& band_matrix() const { return band_; }  // n_bands x n_bins
  const std::vector<double>& centres_hz() const { return centres_hz_; }
  // Inclusive bin range with non-zero weight for `band`.
  std::pair<std::size_t, std::size_t> support(std::size_t band) const;
  // Bin -> the band holding its largest weight (a partition of the bins).
  std::size_t dominant_band(std::size_t bin) const;

  std::string dump() const;

 private:
  std::size_t n_bands_;
  std::size_t n_bins_;
  std::vector<double> band_;
  std::vector<double> centres_hz_;
};

const ErbBank& default_erb_bank();

// Per-frame band log-energies: log10(sum_f W[b,f] |X[t,f]|^2 + 1e-10), frames x n_bands.
std::vector<float> erb_split(const dsp::ComplexSpectrogram& spec, const ErbBank& bank);

// Interpolates band gains (frames x n_bands, each in [0,1]) to bins and scales X.
dsp::ComplexSpectrogram erb_apply_gains(const dsp::ComplexSpectrogram& spec,
                                        const std::vector<float>& gains, const ErbBank& bank);

}  // namespace voxmend::fb
