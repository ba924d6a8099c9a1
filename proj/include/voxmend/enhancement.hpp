#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <vector>

#include "voxmend/ag/layers.hpp"
#include "voxmend/ag/optim.hpp"
#include "voxmend/ag/params.hpp"
#include "voxmend/checkpoint.hpp"
#include "voxmend/filterbank/erb.hpp"
#include "voxmend/losses.hpp"

namespace voxmend::enhancement {

using ag::Tensor;

struct EnhancementConfig {
  std::size_t wideband_cutoff_bin = 160;  // 8 kHz
  std::size_t taer_order = 2;             // high-order residual branches
  std::size_t taer_channels = 16;
  std::size_t taer_tcn_layers = 4;
  std::size_t unet_channels = 16;
  std::size_t crossfade_bins = 8;

  void validate() const;
  static EnhancementConfig toy();  // 8 channels
};

// Wideband network: a shared causal encoder and TCN, a gain decoder ending in
// a sigmoid, and one complex residual decoder per order. The input is
// power-compressed (exponent 0.3) before the encoder.
//   out = G * Z + sum_k R_k
template <typename T>
class Taer {
 public:
  Taer(const EnhancementConfig& cfg, std::uint64_t seed);

  // N x T x W x 2 -> N x T x W x 2 with W = cfg.wideband_cutoff_bin.
  Tensor<T> forward(const Tensor<T>& wide, ag::Timeline<T>& tl) const;
  Tensor<T> forward(const Tensor<T>& wide) const;

  // Replaces the predicted gain by a constant (identity and mute configurations).
  void set_gain_override(std::optional<T> g) { gain_override_ = g; }
  void zero_residuals();

  ag::ParamStore<T>& params() { return store_; }
  const ag::ParamStore<T>& params() const { return store_; }

 private:
  struct Decoder {
    std::vector<ag::ConvT2dLayer<T>> stages;  // 10 -> 20 -> 40 -> 80 -> W bins
  };
  Tensor<T> decode(const Decoder& d, ag::Timeline<T>& tl, const Tensor<T>& h, const std::vector<Tensor<T>>& skips) const;

  EnhancementConfig cfg_;
  ag::ParamStore<T> store_;
  std::vector<ag::Conv2dLayer<T>> enc_;
  std::vector<ag::Conv2dLayer<T>> tcn_;
  Decoder gain_;
  std::vector<Decoder> residual_;
  std::optional<T> gain_override_;
};

// Causal UNet over the 32 ERB bands: two strided conv stages, a dilated
// bottleneck, two transposed-conv stages with skips, a 1x1 conv and a sigmoid.
template <typename T>
class FbmUnet {
 public:
  FbmUnet(const EnhancementConfig& cfg, std::uint64_t seed);

  // feats N x T x 32 (log10 band energies) -> gains N x T x 32 in (0, 1).
  Tensor<T> forward(const Tensor<T>& feats, ag::Timeline<T>& tl) const;
  Tensor<T> forward(const Tensor<T>& feats) const;

  void zero_output_layer() { out_.zero(); }
  ag::ParamStore<T>& params() { return store_; }
  const ag::ParamStore<T>& params() const { return store_; }

 private:
  ag::ParamStore<T> store_;
  std::size_t channels_;
  ag::Conv2dLayer<T> enc1_, enc2_, out_;
  std::vector<ag::Conv2dLayer<T>> mid_;
  ag::ConvT2dLayer<T> dec2_, dec1_;
};

// log10(sum_f W[b, f] |X[f]|^2 + 1e-10): N x T x 481 x 2 -> N x T x n_bands.
template <typename T> Tensor<T> erb_features(const Tensor<T>& spec, const fb::ErbBank& bank);
// Interpolates band gains to bins and scales the spectrum.
template <typename T> Tensor<T> erb_apply_gains(const Tensor<T>& spec, const Tensor<T>& gains, const fb::ErbBank& bank);

// Crossfade weight of the wideband branch at `bin`: 1 below the seam region,
// (cutoff - bin) / crossfade inside it, 0 from the cutoff up.
double merge_weight(std::size_t bin, const EnhancementConfig& cfg);
// wide: N x T x cutoff x 2, full: N x T x 481 x 2 -> N x T x 481 x 2.
template <typename T> Tensor<T> band_merge(const Tensor<T>& wide, const Tensor<T>& full, const EnhancementConfig& cfg);

template <typename T>
struct Enhancer {
  EnhancementConfig cfg;
  Taer<T> taer;
  FbmUnet<T> unet;
  ag::AdamWState<T> taer_opt, unet_opt;

  Enhancer(const EnhancementConfig& c, std::uint64_t seed, const ag::AdamWConfig& opt = {});

  // Restoration-stage spectrum N x T x 481 x 2 -> enhanced spectrum.
  Tensor<T> forward(const Tensor<T>& spec, ag::Timeline<T>& tl) const;
  Tensor<T> forward(const Tensor<T>& spec) const;
};

struct EnhanceStepReport {
  double total = 0, cplx = 0, mag = 0;
};

// clean, degraded: N x L waveforms; `degraded` is the restoration output.
template <typename T>
EnhanceStepReport enhance_train_step(Enhancer<T>& model, const Tensor<T>& clean, const Tensor<T>& degraded,
                                     const losses::LossWeights& w = {});
template <typename T>
EnhanceStepReport enhance_loss(const Enhancer<T>& model, const Tensor<T>& clean, const Tensor<T>& degraded,
                               const losses::LossWeights& w = {});

// Separate checkpoint entry sets for the two networks, each with meta.* values.
template <typename T> std::vector<NamedTensor> export_taer(const Enhancer<T>& model);
template <typename T> std::vector<NamedTensor> export_unet(const Enhancer<T>& model);
template <typename T> void import_taer(Enhancer<T>& model, const std::vector<NamedTensor>& tensors);
template <typename T> void import_unet(Enhancer<T>& model, const std::vector<NamedTensor>& tensors);

}  // namespace voxmend::enhancement
