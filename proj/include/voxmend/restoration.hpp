#pragma once

#include <cstddef>
#include <cstdint>
#include <random>
#include <string>
#include <vector>

#include "voxmend/ag/layers.hpp"
#include "voxmend/ag/optim.hpp"
#include "voxmend/ag/params.hpp"
#include "voxmend/checkpoint.hpp"
#include "voxmend/filterbank/pqmf.hpp"
#include "voxmend/losses.hpp"

namespace voxmend::restoration {

using ag::Tensor;

// STFT used by both stages: 960-point periodic Hann, hop 480, 481 bins.
inline const ag::SpectralParams kSpec{960, 480};

struct GeneratorConfig {
  std::size_t base_channels = 16;
  std::size_t dense_layers = 4;
  std::size_t tcn_blocks = 2;
  std::size_t tcn_layers = 4;  // dilations 1, 2, 4, ...

  void validate() const;
  static GeneratorConfig toy();  // 8 channels
};

// (N, T, 481, 2) -> (N, 6, T, 160); channel 2b + c is part c of band b. Bin 480 is dropped.
template <typename T> Tensor<T> split3(const Tensor<T>& spec);
// Inverse of split3 with a zero Nyquist bin.
template <typename T> Tensor<T> merge3(const Tensor<T>& bands);

// Dense block: conv i sees the concatenation of the block input and all
// earlier conv outputs and produces `growth` channels; the block returns the last output.
template <typename T>
struct DenseBlock {
  std::vector<ag::Conv2dLayer<T>> convs;

  static DenseBlock create(ag::ParamStore<T>& store, const std::string& name, std::size_t cin, std::size_t growth,
                           std::size_t layers, std::mt19937_64& rng);
  Tensor<T> forward(ag::Timeline<T>& tl, const Tensor<T>& x) const;
};

// Complex spectral mapping generator: split3, 4-stage strided encoder with a
// dense block after the first stage, dilated TCN over the flattened
// bottleneck, mirrored transposed-conv decoder with skips, merge3.
template <typename T>
class Generator {
 public:
  Generator(const GeneratorConfig& cfg, std::uint64_t seed);

  // spec: N x T x 481 x 2 -> N x T x 481 x 2. Every layer is causal in time.
  Tensor<T> forward(const Tensor<T>& spec, ag::Timeline<T>& tl) const;
  Tensor<T> forward(const Tensor<T>& spec) const;

  const GeneratorConfig& config() const { return cfg_; }
  ag::ParamStore<T>& params() { return store_; }
  const ag::ParamStore<T>& params() const { return store_; }
  std::size_t param_count() const { return store_.count(); }
  // Zeroes the final transposed conv; the generator then outputs zeros.
  void zero_output_layer() { out_.zero(); }

 private:
  GeneratorConfig cfg_;
  ag::ParamStore<T> store_;
  ag::Conv2dLayer<T> enc0_, enc1_, enc2_, enc3_;
  DenseBlock<T> enc_dense_, dec_dense_;
  std::vector<ag::Conv2dLayer<T>> tcn_;
  ag::ConvT2dLayer<T> dec3_, dec2_, dec1_, out_;
};

enum class DiscKind { MultiResolution, MultiBand };

struct DiscriminatorConfig {
  DiscKind kind = DiscKind::MultiResolution;
  std::size_t channels = 16;
  std::size_t resolution = 1024;  // FFT size for MultiResolution
  std::size_t band = 0;           // split3 band for MultiBand

  void validate() const;
  std::string tag() const;  // "mrf1024", "mb0"
};

// Three MRF (512, 1024, 2048) and three MB discriminators.
std::vector<DiscriminatorConfig> default_discriminators(std::size_t channels = 16);

template <typename T>
struct DiscOutput {
  Tensor<T> score;
  std::vector<Tensor<T>> features;  // all 7 layer outputs, the score last
};

// Stacks |X| and log(|X| + 1e-5): N x T x B -> N x 2 x T x B.
template <typename T> Tensor<T> disc_input(const Tensor<T>& magnitude);

template <typename T>
class Discriminator {
 public:
  static constexpr std::size_t kLayers = 7;

  Discriminator(const DiscriminatorConfig& cfg, std::uint64_t seed);

  // N x 2 x T x B input built by disc_input.
  DiscOutput<T> forward_input(const Tensor<T>& x) const;
  // Reads the waveform (MRF) or the 960-point spectrum (MB) of one signal.
  DiscOutput<T> forward(const Tensor<T>& wave, const Tensor<T>& spec) const;

  const DiscriminatorConfig& config() const { return cfg_; }
  ag::ParamStore<T>& params() { return store_; }
  const ag::ParamStore<T>& params() const { return store_; }
  std::size_t param_count() const { return store_.count(); }

 private:
  DiscriminatorConfig cfg_;
  ag::ParamStore<T> store_;
  std::vector<ag::Conv2dLayer<T>> layers_;
};

template <typename T>
struct GanModel {
  Generator<T> gen;
  std::vector<Discriminator<T>> discs;
  ag::AdamWState<T> gen_opt;
  std::vector<ag::AdamWState<T>> disc_opt;

  GanModel(const GeneratorConfig& g, const std::vector<DiscriminatorConfig>& d, std::uint64_t seed,
           const ag::AdamWConfig& opt = {});
};

struct GanLossConfig {
  losses::LossWeights weights;
  losses::MultiResConfig resolutions;
};

struct GeneratorStepReport {
  double total = 0, fullband = 0, subband = 0, adv = 0, feat = 0;
};

// clean, degraded: N x L waveforms. Returns L_D summed over discriminators;
// only the discriminators are updated.
template <typename T>
double train_step_d(GanModel<T>& model, const Tensor<T>& clean, const Tensor<T>& degraded);

// Returns the generator loss and its components; only the generator is updated.
template <typename T>
GeneratorStepReport train_step_g(GanModel<T>& model, const Tensor<T>& clean, const Tensor<T>& degraded,
                                 const fb::PqmfBank& bank, const GanLossConfig& cfg);

// Generator loss on fixed data without updating anything.
template <typename T>
GeneratorStepReport generator_loss(GanModel<T>& model, const Tensor<T>& clean, const Tensor<T>& degraded,
                                   const fb::PqmfBank& bank, const GanLossConfig& cfg);

// Runs the generator on waveforms: stft -> generator -> istft(length L).
template <typename T> Tensor<T> restore_waves(const Generator<T>& gen, const Tensor<T>& degraded);

// Checkpoint entries: generator under "gen.", each discriminator under
// "disc.<tag>.", optimizer moments under "opt.", plus meta.* values.
template <typename T> std::vector<NamedTensor> export_gan(const GanModel<T>& model);
template <typename T> void import_gan(GanModel<T>& model, const std::vector<NamedTensor>& tensors);

std::vector<NamedTensor> generator_meta(const GeneratorConfig& cfg);
GeneratorConfig generator_config_from(const std::vector<NamedTensor>& tensors);

}  // namespace voxmend::restoration
