#include "voxmend/enhancement.hpp"

#include <cmath>
#include <numbers>
#include <string>

#include "voxmend/ag/ops.hpp"
#include "voxmend/error.hpp"

namespace voxmend::enhancement {

using ag::Shape;

namespace {

constexpr std::size_t kBins = 481;
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

template <typename T>
std::vector<ag::Conv2dLayer<T>> dilated_stack(ag::ParamStore<T>& store, const std::string& name, std::size_t width,
                                              std::size_t layers, std::mt19937_64& rng) {
  std::vector<ag::Conv2dLayer<T>> out;
  for (std::size_t l = 0; l < layers; ++l) {
    auto layer = ag::Conv2dLayer<T>::create(store, name + "." + std::to_string(l), width, width, 2, 1, rng);
    layer.dilation_t = std::size_t{1} << l;
    out.push_back(layer);
  }
  return out;
}

// N x C x T x F -> dilated residual stack over time on C*F channels -> N x C x T x F.
template <typename T>
Tensor<T> run_stack(const std::vector<ag::Conv2dLayer<T>>& stack, ag::Timeline<T>& tl, const Tensor<T>& x) {
  const std::size_t n = x.size(0), c = x.size(1), t = x.size(2), f = x.size(3);
  auto h = ag::reshape(ag::permute(x, {0, 1, 3, 2}), Shape{n, c * f, t});
  for (const auto& layer : stack) h = ag::add(h, leaky(tl.conv1d(layer, h)));
  return ag::permute(ag::reshape(h, Shape{n, c, f, t}), {0, 1, 3, 2});
}

template <typename T>
void check_finite(const Tensor<T>& y, const char* what) {
  for (T v : y.storage()) {
    if (!std::isfinite(v)) throw NumericalError(std::string(what) + ": non-finite output, shape " + ag::to_string(y.shape()));
  }
}

}  // namespace

void EnhancementConfig::validate() const {
  if (wideband_cutoff_bin == 0 || wideband_cutoff_bin > 480 || wideband_cutoff_bin % 16 != 0) {
    throw ValidationError("EnhancementConfig: wideband_cutoff_bin must be a multiple of 16 in (0, 480], got " +
                          std::to_string(wideband_cutoff_bin));
  }
  if (taer_order < 1) throw ValidationError("EnhancementConfig: taer_order must be >= 1");
  if (taer_channels == 0 || unet_channels == 0 || taer_tcn_layers == 0) {
    throw ValidationError("EnhancementConfig: channel and layer counts must be positive");
  }
  if (crossfade_bins == 0 || crossfade_bins > wideband_cutoff_bin) {
    throw ValidationError("EnhancementConfig: crossfade_bins must be in [1, wideband_cutoff_bin]");
  }
}

EnhancementConfig EnhancementConfig::toy() {
  EnhancementConfig c;
  c.taer_channels = 8;
  c.unet_channels = 8;
  return c;
}

template <typename T>
Taer<T>::Taer(const EnhancementConfig& cfg, std::uint64_t seed) : cfg_(cfg) {
  cfg_.validate();
  std::mt19937_64 rng(seed);
  const std::size_t c = cfg_.taer_channels;
  for (std::size_t i = 0; i < 4; ++i) enc_.push_back(strided(store_, "enc" + std::to_string(i), i == 0 ? 2 : c, c, rng));
  tcn_ = dilated_stack(store_, "tcn", c * (cfg_.wideband_cutoff_bin / 16), cfg_.taer_tcn_layers, rng);
  auto make_decoder = [&](const std::string& name, std::size_t out_ch) {
    Decoder d;
    for (std::size_t i = 0; i < 4; ++i) {
      d.stages.push_back(ag::ConvT2dLayer<T>::create(store_, name + "." + std::to_string(i), 2 * c,
                                                     i == 3 ? out_ch : c, 2, 3, 2, rng));
    }
    return d;
  };
  gain_ = make_decoder("gain", 1);
  for (std::size_t k = 0; k < cfg_.taer_order; ++k) {
    residual_.push_back(make_decoder("res" + std::to_string(k + 1), 2));
    residual_.back().stages.back().zero();
  }
}

template <typename T>
void Taer<T>::zero_residuals() {
  for (auto& r : residual_) r.stages.back().zero();
}

template <typename T>
Tensor<T> Taer<T>::decode(const Decoder& d, ag::Timeline<T>& tl, const Tensor<T>& h,
                          const std::vector<Tensor<T>>& skips) const {
  Tensor<T> x = h;
  for (std::size_t i = 0; i < d.stages.size(); ++i) {
    x = tl.conv_t(d.stages[i], ag::concat<T>({x, skips[skips.size() - 1 - i]}, 1));
    if (i + 1 < d.stages.size()) x = leaky(x);
  }
  return x;
}

template <typename T>
Tensor<T> Taer<T>::forward(const Tensor<T>& wide, ag::Timeline<T>& tl) const {
  const std::size_t w = cfg_.wideband_cutoff_bin;
  if (wide.dim() != 4 || wide.size(2) != w || wide.size(3) != 2) {
    throw ShapeError("taer: expected N x T x " + std::to_string(w) + " x 2, got " + ag::to_string(wide.shape()));
  }
  const std::size_t n = wide.size(0), t = wide.size(1);
  auto x = ag::permute(ag::complex_power(wide, static_cast<T>(losses::kCompress), static_cast<T>(losses::kPhaseEps)),
                       {0, 3, 1, 2});
  std::vector<Tensor<T>> skips;
  for (const auto& l : enc_) {
    x = leaky(tl.conv(l, x));
    skips.push_back(x);
  }
  auto h = run_stack(tcn_, tl, x);

  // Every decoder runs so the streaming cache layout does not depend on the override.
  auto g = ag::reshape(ag::sigmoid(decode(gain_, tl, h, skips)), Shape{n, t, w});
  if (gain_override_) g = Tensor<T>(Shape{n, t, w}, std::vector<T>(n * t * w, *gain_override_));
  auto y = ag::scale_complex(wide, g);
  for (const auto& r : residual_) y = ag::add(y, ag::permute(decode(r, tl, h, skips), {0, 2, 3, 1}));
  check_finite(y, "taer");
  return y;
}

template <typename T>
Tensor<T> Taer<T>::forward(const Tensor<T>& wide) const {
  ag::Timeline<T> tl;
  return forward(wide, tl);
}

template <typename T>
FbmUnet<T>::FbmUnet(const EnhancementConfig& cfg, std::uint64_t seed) : channels_(cfg.unet_channels) {
  cfg.validate();
  std::mt19937_64 rng(seed);
  const std::size_t c = channels_;
  enc1_ = strided(store_, "enc1", 1, c, rng);
  enc2_ = strided(store_, "enc2", c, c, rng);
  mid_ = dilated_stack(store_, "mid", c * 8, 2, rng);
  dec2_ = ag::ConvT2dLayer<T>::create(store_, "dec2", 2 * c, c, 2, 3, 2, rng);
  dec1_ = ag::ConvT2dLayer<T>::create(store_, "dec1", 2 * c, c, 2, 3, 2, rng);
  out_ = ag::Conv2dLayer<T>::create(store_, "out", c, 1, 1, 1, rng);
}

template <typename T>
Tensor<T> FbmUnet<T>::forward(const Tensor<T>& feats, ag::Timeline<T>& tl) const {
  if (feats.dim() != 3 || feats.size(2) != 32) {
    throw ShapeError("fbm_unet: expected N x T x 32 features, got " + ag::to_string(feats.shape()));
  }
  const std::size_t n = feats.size(0), t = feats.size(1);
  // log10 energies sit roughly in [-10, 0] for full-scale audio.
  auto x = ag::reshape(ag::scale(ag::add_scalar(feats, T(5)), T(0.2)), Shape{n, 1, t, 32});
  auto e1 = leaky(tl.conv(enc1_, x));
  auto e2 = leaky(tl.conv(enc2_, e1));
  auto b = run_stack(mid_, tl, e2);
  auto d2 = leaky(tl.conv_t(dec2_, ag::concat<T>({b, e2}, 1)));
  auto d1 = leaky(tl.conv_t(dec1_, ag::concat<T>({d2, e1}, 1)));
  auto g = ag::reshape(ag::sigmoid(tl.conv(out_, d1)), Shape{n, t, 32});
  check_finite(g, "fbm_unet");
  return g;
}

template <typename T>
Tensor<T> FbmUnet<T>::forward(const Tensor<T>& feats) const {
  ag::Timeline<T> tl;
  return forward(feats, tl);
}

template <typename T>
Tensor<T> erb_features(const Tensor<T>& spec, const fb::ErbBank& bank) {
  if (spec.dim() != 4 || spec.size(2) != bank.n_bins() || spec.size(3) != 2) {
    throw ShapeError("erb_features: expected N x T x " + std::to_string(bank.n_bins()) + " x 2");
  }
  static const auto pair_sum = std::make_shared<const std::vector<T>>(std::vector<T>{T(1), T(1)});
  auto band = std::make_shared<const std::vector<T>>(bank.band_matrix().begin(), bank.band_matrix().end());
  const std::size_t n = spec.size(0), t = spec.size(1);
  auto power = ag::reshape(ag::linear_map(ag::square(spec), pair_sum, 1), Shape{n, t, bank.n_bins()});
  auto e = ag::linear_map(power, band, bank.n_bands());
  return ag::scale(ag::log(e, static_cast<T>(1e-10)), static_cast<T>(1.0 / std::numbers::ln10));
}

template <typename T>
Tensor<T> erb_apply_gains(const Tensor<T>& spec, const Tensor<T>& gains, const fb::ErbBank& bank) {
  if (spec.dim() != 4 || spec.size(2) != bank.n_bins() || gains.dim() != 3 || gains.size(2) != bank.n_bands() ||
      gains.size(0) != spec.size(0) || gains.size(1) != spec.size(1)) {
    throw ShapeError("erb_apply_gains: spectrum " + ag::to_string(spec.shape()) + " and gains " +
                     ag::to_string(gains.shape()) + " do not match");
  }
  std::vector<T> m(bank.n_bins() * bank.n_bands());
  for (std::size_t f = 0; f < bank.n_bins(); ++f)
    for (std::size_t b = 0; b < bank.n_bands(); ++b) m[f * bank.n_bands() + b] = static_cast<T>(bank.merge_weight(f, b));
  auto merge = std::make_shared<const std::vector<T>>(std::move(m));
  return ag::scale_complex(spec, ag::linear_map(gains, merge, bank.n_bins()));
}

double merge_weight(std::size_t bin, const EnhancementConfig& cfg) {
  const std::size_t cut = cfg.wideband_cutoff_bin, cf = cfg.crossfade_bins;
  if (bin >= cut) return 0.0;
  if (bin + cf <= cut) return 1.0;
  return static_cast<double>(cut - bin) / static_cast<double>(cf);
}

template <typename T>
Tensor<T> band_merge(const Tensor<T>& wide, const Tensor<T>& full, const EnhancementConfig& cfg) {
  const std::size_t w = cfg.wideband_cutoff_bin;
  if (full.dim() != 4 || full.size(2) != kBins || full.size(3) != 2 || wide.dim() != 4 || wide.size(0) != full.size(0) ||
      wide.size(1) != full.size(1) || wide.size(2) != w || wide.size(3) != 2) {
    throw ShapeError("band_merge: wideband " + ag::to_string(wide.shape()) + " does not fit fullband " +
                     ag::to_string(full.shape()));
  }
  const std::size_t n = full.size(0), t = full.size(1);
  // Three disjoint masks: wideband copy, fullband copy, and the seam where
  // full + w * (wide - full) is exact whenever the branches agree.
  std::vector<T> keep_wide(n * t * kBins), keep_full(n * t * kBins), seam(n * t * kBins);
  for (std::size_t i = 0; i < n * t; ++i)
    for (std::size_t f = 0; f < kBins; ++f) {
      const double wf = merge_weight(f, cfg);
      keep_wide[i * kBins + f] = wf == 1.0 ? T(1) : T(0);
      keep_full[i * kBins + f] = wf == 1.0 ? T(0) : T(1);
      seam[i * kBins + f] = wf == 1.0 ? T(0) : static_cast<T>(wf);
    }
  const Shape gs{n, t, kBins};
  auto padded = ag::concat<T>({wide, Tensor<T>::zeros(Shape{n, t, kBins - w, 2})}, 2);
  auto y = ag::add(ag::scale_complex(padded, Tensor<T>(gs, std::move(keep_wide))),
                   ag::scale_complex(full, Tensor<T>(gs, std::move(keep_full))));
  return ag::add(y, ag::scale_complex(ag::sub(padded, full), Tensor<T>(gs, std::move(seam))));
}

template <typename T>
Enhancer<T>::Enhancer(const EnhancementConfig& c, std::uint64_t seed, const ag::AdamWConfig& opt)
    : cfg(c), taer(c, seed), unet(c, seed + 1) {
  taer_opt.cfg = opt;
  unet_opt.cfg = opt;
}

template <typename T>
Tensor<T> Enhancer<T>::forward(const Tensor<T>& spec, ag::Timeline<T>& tl) const {
  if (spec.dim() != 4 || spec.size(2) != kBins || spec.size(3) != 2) {
    throw ShapeError("enhance: expected N x T x 481 x 2, got " + ag::to_string(spec.shape()));
  }
  auto wide = taer.forward(ag::slice(spec, 2, 0, cfg.wideband_cutoff_bin), tl);
  const auto& bank = fb::default_erb_bank();
  auto gains = unet.forward(erb_features(spec, bank), tl);
  return band_merge(wide, erb_apply_gains(spec, gains, bank), cfg);
}

template <typename T>
Tensor<T> Enhancer<T>::forward(const Tensor<T>& spec) const {
  ag::Timeline<T> tl;
  return forward(spec, tl);
}

namespace {

template <typename T>
losses::EnhancementLoss<T> loss_graph(const Enhancer<T>& model, const Tensor<T>& clean, const Tensor<T>& degraded,
                                      const losses::LossWeights& w) {
  if (clean.shape() != degraded.shape() || clean.dim() != 2) {
    throw ShapeError("enhance_train_step: expected equal N x L batches");
  }
  const ag::SpectralParams sp{};
  auto target = ag::stft(clean, sp);
  auto out = model.forward(ag::stft(degraded, sp));
  return losses::enhancement_total_loss(losses::compressed_complex_loss(target, out),
                                        losses::compressed_mag_loss(target, out), w);
}

}  // namespace

template <typename T>
EnhanceStepReport enhance_train_step(Enhancer<T>& model, const Tensor<T>& clean, const Tensor<T>& degraded,
                                     const losses::LossWeights& w) {
  auto l = loss_graph(model, clean, degraded, w);
  EnhanceStepReport rep{l.total.item(), l.cplx.item(), l.mag.item()};
  ag::backward(l.total);
  ag::adamw_step(model.taer.params(), model.taer_opt);
  ag::adamw_step(model.unet.params(), model.unet_opt);
  return rep;
}

template <typename T>
EnhanceStepReport enhance_loss(const Enhancer<T>& model, const Tensor<T>& clean, const Tensor<T>& degraded,
                               const losses::LossWeights& w) {
  ag::NoGradGuard guard;
  auto l = loss_graph(model, clean, degraded, w);
  return {l.total.item(), l.cplx.item(), l.mag.item()};
}

namespace {

void append(std::vector<NamedTensor>& out, std::vector<NamedTensor> v) {
  for (auto& t : v) out.push_back(std::move(t));
}

void expect_meta(const std::vector<NamedTensor>& t, const std::string& name, std::size_t want) {
  const float got = meta_value(t, name);
  if (got != static_cast<float>(want)) {
    throw ValidationError("checkpoint: " + name + " is " + std::to_string(got) + ", configured model has " +
                          std::to_string(want));
  }
}

}  // namespace

template <typename T>
std::vector<NamedTensor> export_taer(const Enhancer<T>& model) {
  std::vector<NamedTensor> out{meta_tensor("meta.taer.cutoff", static_cast<float>(model.cfg.wideband_cutoff_bin)),
                               meta_tensor("meta.taer.order", static_cast<float>(model.cfg.taer_order)),
                               meta_tensor("meta.taer.channels", static_cast<float>(model.cfg.taer_channels)),
                               meta_tensor("meta.taer.tcn_layers", static_cast<float>(model.cfg.taer_tcn_layers))};
  append(out, model.taer.params().export_tensors("taer."));
  append(out, ag::export_optimizer(model.taer.params(), model.taer_opt, "opt.taer."));
  return out;
}

template <typename T>
std::vector<NamedTensor> export_unet(const Enhancer<T>& model) {
  std::vector<NamedTensor> out{meta_tensor("meta.unet.channels", static_cast<float>(model.cfg.unet_channels))};
  append(out, model.unet.params().export_tensors("unet."));
  append(out, ag::export_optimizer(model.unet.params(), model.unet_opt, "opt.unet."));
  return out;
}

template <typename T>
void import_taer(Enhancer<T>& model, const std::vector<NamedTensor>& t) {
  expect_meta(t, "meta.taer.cutoff", model.cfg.wideband_cutoff_bin);
  expect_meta(t, "meta.taer.order", model.cfg.taer_order);
  expect_meta(t, "meta.taer.channels", model.cfg.taer_channels);
  expect_meta(t, "meta.taer.tcn_layers", model.cfg.taer_tcn_layers);
  model.taer.params().import_tensors(t, "taer.");
  ag::import_optimizer(model.taer.params(), model.taer_opt, t, "opt.taer.");
}

template <typename T>
void import_unet(Enhancer<T>& model, const std::vector<NamedTensor>& t) {
  expect_meta(t, "meta.unet.channels", model.cfg.unet_channels);
  model.unet.params().import_tensors(t, "unet.");
  ag::import_optimizer(model.unet.params(), model.unet_opt, t, "opt.unet.");
}

#define VOXMEND_INSTANTIATE(T)                                                                                  \
  template class Taer<T>;                                                                                       \
  template class FbmUnet<T>;                                                                                    \
  template Tensor<T> erb_features(const Tensor<T>&, const fb::ErbBank&);                                        \
  template Tensor<T> erb_apply_gains(const Tensor<T>&, const Tensor<T>&, const fb::ErbBank&);                   \
  template Tensor<T> band_merge(const Tensor<T>&, const Tensor<T>&, const EnhancementConfig&);                  \
  template struct Enhancer<T>;                                                                                  \
  template EnhanceStepReport enhance_train_step(Enhancer<T>&, const Tensor<T>&, const Tensor<T>&,               \
                                                const losses::LossWeights&);                                    \
  template EnhanceStepReport enhance_loss(const Enhancer<T>&, const Tensor<T>&, const Tensor<T>&,               \
                                          const losses::LossWeights&);

VOXMEND_INSTANTIATE(float)
VOXMEND_INSTANTIATE(double)

template std::vector<NamedTensor> export_taer(const Enhancer<float>&);
template std::vector<NamedTensor> export_unet(const Enhancer<float>&);
template void import_taer(Enhancer<float>&, const std::vector<NamedTensor>&);
template void import_unet(Enhancer<float>&, const std::vector<NamedTensor>&);

}  // namespace voxmend::enhancement
