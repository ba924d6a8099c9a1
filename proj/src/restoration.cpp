#include "voxmend/restoration.hpp"

#include <cmath>

#include "voxmend/ag/ops.hpp"
#include "voxmend/error.hpp"

namespace voxmend::restoration {

using ag::Shape;

namespace {

constexpr std::size_t kBins = 481;
constexpr std::size_t kBandBins = 160;
constexpr std::size_t kBottleneckBins = 10;
constexpr double kSlope = 0.2;

template <typename T>
Tensor<T> leaky(const Tensor<T>& x) {
  return ag::leaky_relu(x, static_cast<T>(kSlope));
}

template <typename T>
ag::Conv2dLayer<T> strided(ag::ParamStore<T>& store, const std::string& name, std::size_t cin, std::size_t cout,
                           std::mt19937_64& rng) {
  auto l = ag::Conv2dLayer<T>::create(store, name, cin, cout, 2, 3, rng);
  l.stride_f = 2;
  return l;
}

}  // namespace

void GeneratorConfig::validate() const {
  if (base_channels == 0 || dense_layers == 0 || tcn_blocks == 0 || tcn_layers == 0) {
    throw ValidationError("GeneratorConfig: channel and layer counts must be positive");
  }
  if (tcn_layers > 12) throw ValidationError("GeneratorConfig: tcn_layers above 12 gives dilations beyond 4096");
}

GeneratorConfig GeneratorConfig::toy() {
  GeneratorConfig c;
  c.base_channels = 8;
  return c;
}

template <typename T>
Tensor<T> split3(const Tensor<T>& spec) {
  if (spec.dim() != 4 || spec.size(2) != kBins || spec.size(3) != 2) {
    throw ShapeError("split3: expected N x T x 481 x 2, got " + ag::to_string(spec.shape()));
  }
  const std::size_t n = spec.size(0), t = spec.size(1);
  auto x = ag::reshape(ag::slice(spec, 2, 0, 3 * kBandBins), Shape{n, t, 3, kBandBins, 2});
  return ag::reshape(ag::permute(x, {0, 2, 4, 1, 3}), Shape{n, 6, t, kBandBins});
}

template <typename T>
Tensor<T> merge3(const Tensor<T>& bands) {
  if (bands.dim() != 4 || bands.size(1) != 6 || bands.size(3) != kBandBins) {
    throw ShapeError("merge3: expected N x 6 x T x 160, got " + ag::to_string(bands.shape()));
  }
  const std::size_t n = bands.size(0), t = bands.size(2);
  auto x = ag::reshape(bands, Shape{n, 3, 2, t, kBandBins});
  x = ag::reshape(ag::permute(x, {0, 3, 1, 4, 2}), Shape{n, t, 3 * kBandBins, 2});
  return ag::concat<T>({x, Tensor<T>::zeros(Shape{n, t, 1, 2})}, 2);
}

template <typename T>
DenseBlock<T> DenseBlock<T>::create(ag::ParamStore<T>& store, const std::string& name, std::size_t cin,
                                    std::size_t growth, std::size_t layers, std::mt19937_64& rng) {
  DenseBlock<T> d;
  for (std::size_t i = 0; i < layers; ++i) {
    d.convs.push_back(
        ag::Conv2dLayer<T>::create(store, name + "." + std::to_string(i), cin + growth * i, growth, 2, 3, rng));
  }
  return d;
}

template <typename T>
Tensor<T> DenseBlock<T>::forward(ag::Timeline<T>& tl, const Tensor<T>& x) const {
  std::vector<Tensor<T>> seen{x};
  Tensor<T> y;
  for (const auto& c : convs) {
    y = leaky(tl.conv(c, seen.size() == 1 ? x : ag::concat(seen, 1)));
    seen.push_back(y);
  }
  return y;
}

template <typename T>
Generator<T>::Generator(const GeneratorConfig& cfg, std::uint64_t seed) : cfg_(cfg) {
  cfg_.validate();
  std::mt19937_64 rng(seed);
  const std::size_t c = cfg_.base_channels;
  enc0_ = strided(store_, "enc0", 6, c, rng);
  enc_dense_ = DenseBlock<T>::create(store_, "enc_dense", c, c, cfg_.dense_layers, rng);
  enc1_ = strided(store_, "enc1", c, c, rng);
  enc2_ = strided(store_, "enc2", c, c, rng);
  enc3_ = strided(store_, "enc3", c, c, rng);
  const std::size_t width = c * kBottleneckBins;
  for (std::size_t b = 0; b < cfg_.tcn_blocks; ++b)
    for (std::size_t l = 0; l < cfg_.tcn_layers; ++l) {
      auto layer = ag::Conv2dLayer<T>::create(store_, "tcn." + std::to_string(b) + "." + std::to_string(l), width,
                                              width, 2, 1, rng);
      layer.dilation_t = std::size_t{1} << l;
      tcn_.push_back(layer);
    }
  dec3_ = ag::ConvT2dLayer<T>::create(store_, "dec3", 2 * c, c, 2, 3, 2, rng);
  dec2_ = ag::ConvT2dLayer<T>::create(store_, "dec2", 2 * c, c, 2, 3, 2, rng);
  dec1_ = ag::ConvT2dLayer<T>::create(store_, "dec1", 2 * c, c, 2, 3, 2, rng);
  dec_dense_ = DenseBlock<T>::create(store_, "dec_dense", 2 * c, c, cfg_.dense_layers, rng);
  out_ = ag::ConvT2dLayer<T>::create(store_, "out", c, 6, 2, 3, 2, rng);
}

template <typename T>
Tensor<T> Generator<T>::forward(const Tensor<T>& spec, ag::Timeline<T>& tl) const {
  auto x = split3(spec);
  const std::size_t n = x.size(0), t = x.size(2), c = cfg_.base_channels;
  auto e0 = leaky(tl.conv(enc0_, x));
  auto ed = enc_dense_.forward(tl, e0);
  auto e1 = leaky(tl.conv(enc1_, ed));
  auto e2 = leaky(tl.conv(enc2_, e1));
  auto e3 = leaky(tl.conv(enc3_, e2));

  auto h = ag::reshape(ag::permute(e3, {0, 1, 3, 2}), Shape{n, c * kBottleneckBins, t});
  for (const auto& layer : tcn_) h = ag::add(h, leaky(tl.conv1d(layer, h)));
  h = ag::permute(ag::reshape(h, Shape{n, c, kBottleneckBins, t}), {0, 1, 3, 2});

  auto d3 = leaky(tl.conv_t(dec3_, ag::concat<T>({h, e3}, 1)));
  auto d2 = leaky(tl.conv_t(dec2_, ag::concat<T>({d3, e2}, 1)));
  auto d1 = leaky(tl.conv_t(dec1_, ag::concat<T>({d2, e1}, 1)));
  auto dd = dec_dense_.forward(tl, ag::concat<T>({d1, ed}, 1));
  auto y = merge3(tl.conv_t(out_, dd));
  for (T v : y.storage()) {
    if (!std::isfinite(v)) throw NumericalError("generator: non-finite output for input " + ag::to_string(spec.shape()));
  }
  return y;
}

template <typename T>
Tensor<T> Generator<T>::forward(const Tensor<T>& spec) const {
  ag::Timeline<T> tl;
  return forward(spec, tl);
}

void DiscriminatorConfig::validate() const {
  if (channels == 0) throw ValidationError("DiscriminatorConfig: channels must be positive");
  if (kind == DiscKind::MultiResolution && (resolution < 16 || (resolution & (resolution - 1)) != 0)) {
    throw ValidationError("DiscriminatorConfig: resolution must be a power of two >= 16");
  }
  if (kind == DiscKind::MultiBand && band >= 3) {
    throw ValidationError("DiscriminatorConfig: band index " + std::to_string(band) + " out of range [0, 3)");
  }
}

std::string DiscriminatorConfig::tag() const {
  return kind == DiscKind::MultiResolution ? "mrf" + std::to_string(resolution) : "mb" + std::to_string(band);
}

std::vector<DiscriminatorConfig> default_discriminators(std::size_t channels) {
  std::vector<DiscriminatorConfig> out;
  for (std::size_t r : {512, 1024, 2048}) out.push_back({DiscKind::MultiResolution, channels, r, 0});
  for (std::size_t b = 0; b < 3; ++b) out.push_back({DiscKind::MultiBand, channels, 0, b});
  return out;
}

template <typename T>
Tensor<T> disc_input(const Tensor<T>& magnitude) {
  if (magnitude.dim() != 3) throw ShapeError("disc_input: expected N x T x B magnitudes");
  const Shape s{magnitude.size(0), 1, magnitude.size(1), magnitude.size(2)};
  auto m = ag::reshape(magnitude, s);
  return ag::concat<T>({m, ag::log(m, static_cast<T>(losses::kLogEps))}, 1);
}

template <typename T>
Discriminator<T>::Discriminator(const DiscriminatorConfig& cfg, std::uint64_t seed) : cfg_(cfg) {
  cfg_.validate();
  std::mt19937_64 rng(seed);
  const std::size_t c = cfg_.channels;
  for (std::size_t i = 0; i < kLayers; ++i) {
    const std::size_t cin = i == 0 ? 2 : c, cout = i + 1 == kLayers ? 1 : c;
    auto l = ag::Conv2dLayer<T>::create(store_, "conv" + std::to_string(i), cin, cout, 3, 3, rng, i + 1 < kLayers);
    l.stride_t = l.stride_f = (i >= 1 && i <= 3) ? 2 : 1;
    layers_.push_back(l);
  }
}

template <typename T>
DiscOutput<T> Discriminator<T>::forward_input(const Tensor<T>& x) const {
  if (x.dim() != 4 || x.size(1) != 2) throw ShapeError("discriminator: expected N x 2 x T x B input, got " + ag::to_string(x.shape()));
  DiscOutput<T> out;
  Tensor<T> h = x;
  for (std::size_t i = 0; i < kLayers; ++i) {
    const auto& l = layers_[i];
    ag::Conv2dParams p;
    p.stride_t = l.stride_t;
    p.stride_f = l.stride_f;
    p.pad_t_before = p.pad_t_after = 1;
    p.pad_f = 1;
    h = ag::conv2d(h, l.weight(), l.b, p);
    if (i + 1 < kLayers) h = leaky(h);
    out.features.push_back(h);
  }
  out.score = h;
  return out;
}

template <typename T>
DiscOutput<T> Discriminator<T>::forward(const Tensor<T>& wave, const Tensor<T>& spec) const {
  if (cfg_.kind == DiscKind::MultiResolution) {
    return forward_input(disc_input(losses::magnitude(wave, cfg_.resolution, cfg_.resolution / 4)));
  }
  if (spec.dim() != 4 || spec.size(2) != kBins) throw ShapeError("discriminator: expected N x T x 481 x 2 spectrum");
  auto band = ag::slice(spec, 2, cfg_.band * kBandBins, (cfg_.band + 1) * kBandBins);
  return forward_input(disc_input(ag::complex_abs(band)));
}

template <typename T>
GanModel<T>::GanModel(const GeneratorConfig& g, const std::vector<DiscriminatorConfig>& d, std::uint64_t seed,
                      const ag::AdamWConfig& opt)
    : gen(g, seed) {
  gen_opt.cfg = opt;
  for (std::size_t i = 0; i < d.size(); ++i) {
    discs.emplace_back(d[i], seed + 1 + i);
    disc_opt.emplace_back();
    disc_opt.back().cfg = opt;
  }
}

template <typename T>
Tensor<T> restore_waves(const Generator<T>& gen, const Tensor<T>& degraded) {
  if (degraded.dim() != 2) throw ShapeError("restore_waves: expected N x L waveforms");
  return ag::istft(gen.forward(ag::stft(degraded, kSpec)), kSpec, degraded.size(1));
}

template <typename T>
double train_step_d(GanModel<T>& model, const Tensor<T>& clean, const Tensor<T>& degraded) {
  if (clean.shape() != degraded.shape()) throw ShapeError("train_step_d: clean and degraded batches differ in shape");
  if (model.discs.empty()) throw ValidationError("train_step_d: no discriminators");
  Tensor<T> fake_spec, fake_wave, clean_spec;
  {
    ag::NoGradGuard guard;
    fake_spec = model.gen.forward(ag::stft(degraded, kSpec));
    fake_wave = ag::istft(fake_spec, kSpec, degraded.size(1));
    clean_spec = ag::stft(clean, kSpec);
  }
  Tensor<T> total;
  for (const auto& d : model.discs) {
    auto real = d.forward(clean, clean_spec);
    auto fake = d.forward(fake_wave, fake_spec);
    auto l = losses::lsgan_d_loss(real.score, fake.score);
    total = total.defined() ? ag::add(total, l) : l;
  }
  const double value = total.item();
  ag::backward(total);
  for (std::size_t i = 0; i < model.discs.size(); ++i) ag::adamw_step(model.discs[i].params(), model.disc_opt[i]);
  return value;
}

namespace {

template <typename T>
losses::GeneratorLoss<T> generator_graph(GanModel<T>& model, const Tensor<T>& clean, const Tensor<T>& degraded,
                                         const fb::PqmfBank& bank, const GanLossConfig& cfg) {
  if (clean.shape() != degraded.shape()) throw ShapeError("train_step_g: clean and degraded batches differ in shape");
  auto fake_spec = model.gen.forward(ag::stft(degraded, kSpec));
  auto fake_wave = ag::istft(fake_spec, kSpec, degraded.size(1));
  auto full = losses::mrstft_loss(clean, fake_wave, cfg.resolutions);
  auto sub = losses::subband_mrstft_loss(clean, fake_wave, bank, cfg.resolutions);
  Tensor<T> adv = Tensor<T>::zeros(Shape{}), feat = Tensor<T>::zeros(Shape{});
  const bool use_discs = !model.discs.empty() && (cfg.weights.adv > 0 || cfg.weights.feat > 0);
  if (use_discs) {
    Tensor<T> clean_spec;
    std::vector<Tensor<T>> scores;
    std::vector<std::vector<Tensor<T>>> real_feats, fake_feats;
    for (const auto& d : model.discs) {
      {
        ag::NoGradGuard guard;
        if (!clean_spec.defined()) clean_spec = ag::stft(clean, kSpec);
        real_feats.push_back(d.forward(clean, clean_spec).features);
      }
      auto fake = d.forward(fake_wave, fake_spec);
      scores.push_back(fake.score);
      fake_feats.push_back(std::move(fake.features));
    }
    adv = losses::lsgan_g_loss(scores);
    feat = losses::feature_match_loss(real_feats, fake_feats);
  }
  return losses::generator_total_loss(full, sub, adv, feat, cfg.weights);
}

template <typename T>
GeneratorStepReport report_of(const losses::GeneratorLoss<T>& l) {
  return {l.total.item(), l.fullband.item(), l.subband.item(), l.adv.item(), l.feat.item()};
}

}  // namespace

template <typename T>
GeneratorStepReport train_step_g(GanModel<T>& model, const Tensor<T>& clean, const Tensor<T>& degraded,
                                 const fb::PqmfBank& bank, const GanLossConfig& cfg) {
  auto l = generator_graph(model, clean, degraded, bank, cfg);
  auto rep = report_of(l);
  ag::backward(l.total);
  ag::adamw_step(model.gen.params(), model.gen_opt);
  for (auto& d : model.discs) d.params().zero_grad();
  return rep;
}

template <typename T>
GeneratorStepReport generator_loss(GanModel<T>& model, const Tensor<T>& clean, const Tensor<T>& degraded,
                                   const fb::PqmfBank& bank, const GanLossConfig& cfg) {
  ag::NoGradGuard guard;
  return report_of(generator_graph(model, clean, degraded, bank, cfg));
}

std::vector<NamedTensor> generator_meta(const GeneratorConfig& cfg) {
  return {meta_tensor("meta.gen.base_channels", static_cast<float>(cfg.base_channels)),
          meta_tensor("meta.gen.dense_layers", static_cast<float>(cfg.dense_layers)),
          meta_tensor("meta.gen.tcn_blocks", static_cast<float>(cfg.tcn_blocks)),
          meta_tensor("meta.gen.tcn_layers", static_cast<float>(cfg.tcn_layers))};
}

GeneratorConfig generator_config_from(const std::vector<NamedTensor>& tensors) {
  GeneratorConfig c;
  c.base_channels = static_cast<std::size_t>(meta_value(tensors, "meta.gen.base_channels"));
  c.dense_layers = static_cast<std::size_t>(meta_value(tensors, "meta.gen.dense_layers"));
  c.tcn_blocks = static_cast<std::size_t>(meta_value(tensors, "meta.gen.tcn_blocks"));
  c.tcn_layers = static_cast<std::size_t>(meta_value(tensors, "meta.gen.tcn_layers"));
  c.validate();
  return c;
}

template <typename T>
std::vector<NamedTensor> export_gan(const GanModel<T>& model) {
  auto out = generator_meta(model.gen.config());
  auto append = [&out](std::vector<NamedTensor> v) {
    for (auto& t : v) out.push_back(std::move(t));
  };
  append(model.gen.params().export_tensors("gen."));
  append(ag::export_optimizer(model.gen.params(), model.gen_opt, "opt.gen."));
  out.push_back(meta_tensor("meta.disc.count", static_cast<float>(model.discs.size())));
  for (std::size_t i = 0; i < model.discs.size(); ++i) {
    const auto tag = model.discs[i].config().tag();
    append(model.discs[i].params().export_tensors("disc." + tag + "."));
    append(ag::export_optimizer(model.discs[i].params(), model.disc_opt[i], "opt.disc." + tag + "."));
  }
  return out;
}

template <typename T>
void import_gan(GanModel<T>& model, const std::vector<NamedTensor>& tensors) {
  const auto cfg = generator_config_from(tensors);
  const auto& have = model.gen.config();
  if (cfg.base_channels != have.base_channels || cfg.dense_layers != have.dense_layers ||
      cfg.tcn_blocks != have.tcn_blocks || cfg.tcn_layers != have.tcn_layers) {
    throw ValidationError("checkpoint: generator architecture differs from the configured model");
  }
  model.gen.params().import_tensors(tensors, "gen.");
  ag::import_optimizer(model.gen.params(), model.gen_opt, tensors, "opt.gen.");
  for (std::size_t i = 0; i < model.discs.size(); ++i) {
    const auto tag = model.discs[i].config().tag();
    model.discs[i].params().import_tensors(tensors, "disc." + tag + ".");
    ag::import_optimizer(model.discs[i].params(), model.disc_opt[i], tensors, "opt.disc." + tag + ".");
  }
}

#define VOXMEND_INSTANTIATE(T)                                                                                  \
  template Tensor<T> split3(const Tensor<T>&);                                                                  \
  template Tensor<T> merge3(const Tensor<T>&);                                                                  \
  template struct DenseBlock<T>;                                                                                \
  template class Generator<T>;                                                                                  \
  template Tensor<T> disc_input(const Tensor<T>&);                                                              \
  template class Discriminator<T>;                                                                              \
  template struct GanModel<T>;                                                                                  \
  template Tensor<T> restore_waves(const Generator<T>&, const Tensor<T>&);                                      \
  template double train_step_d(GanModel<T>&, const Tensor<T>&, const Tensor<T>&);                               \
  template GeneratorStepReport train_step_g(GanModel<T>&, const Tensor<T>&, const Tensor<T>&, const fb::PqmfBank&, \
                                            const GanLossConfig&);                                              \
  template GeneratorStepReport generator_loss(GanModel<T>&, const Tensor<T>&, const Tensor<T>&,                 \
                                              const fb::PqmfBank&, const GanLossConfig&);

VOXMEND_INSTANTIATE(float)
VOXMEND_INSTANTIATE(double)

template std::vector<NamedTensor> export_gan(const GanModel<float>&);
template void import_gan(GanModel<float>&, const std::vector<NamedTensor>&);

}  // namespace voxmend::restoration
