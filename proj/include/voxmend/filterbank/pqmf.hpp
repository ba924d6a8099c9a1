#pragma once

#include <cstddef>
#include <string>
#include <vector>

#include "voxmend/dsp/waveform.hpp"

namespace voxmend::fb {

// Cosine-modulated pseudo-QMF bank built from a Kaiser-windowed sinc
// prototype. Analysis and synthesis filters are both `taps()` long, so the
// analysis+synthesis chain delays the input by taps()-1 samples.
class PqmfBank {
 public:
  explicit PqmfBank(std::size_t n_bands = 4, double kaiser_beta = 9.0);

  std::size_t n_bands() const { return n_bands_; }
  std::size_t taps() const { return prototype_.size(); }
  std::size_t group_delay() const { return prototype_.size() - 1; }
  double cutoff() const { return cutoff_; }
  const std::vector<double>& prototype() const { return prototype_; }
  // analysis(k)[n] / synthesis(k)[n]
  const std::vector<double>& analysis(std::size_t k) const { return analysis_[k]; }
  const std::vector<double>& synthesis(std::size_t k) const { return synthesis_[k]; }

  std::string dump() const;

 private:
  std::size_t n_bands_;
  double cutoff_ = 0.0;
  std::vector<double> prototype_;
  std::vector<std::vector<double>> analysis_;
  std::vector<std::vector<double>> synthesis_;
};

using Subbands = std::vector<std::vector<float>>;

// Causal filtering followed by critical decimation: band b has
// ceil(N / n_bands) samples and holds [b, b+1) * 24 kHz / n_bands.
Subbands pqmf_analyze(const dsp::Waveform& wave, const PqmfBank& bank);

// Interpolate, filter and sum. The output has n_bands * band_length samples
// and lags the analysed signal by bank.group_delay().
dsp::Waveform pqmf_synthesize(const Subbands& bands, const PqmfBank& bank);

}  // namespace voxmend::fb
