#include <doctest.h>

#include <cmath>
#include <random>

#include "support/gradcheck.hpp"
#include "support/signals.hpp"
#include "voxmend/enhancement.hpp"
#include "voxmend/error.hpp"

using namespace voxmend;
using namespace voxmend::enhancement;
using ag::Shape;
using testsupport::gradcheck;
using testsupport::random_tensor;

namespace {

EnhancementConfig tiny_cfg() {
  EnhancementConfig c;
  c.taer_channels = 2;
  c.taer_tcn_layers = 1;
  c.unet_channels = 2;
  c.taer_order = 1;
  return c;
}

Tensor<float> random_spec(std::size_t frames, std::size_t bins, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<float> d(-1, 1);
  std::vector<float> v(frames * bins * 2);
  for (auto& x : v) x = d(rng);
  return Tensor<float>(Shape{1, frames, bins, 2}, v);
}

dsp::ComplexSpectrogram to_plain(const Tensor<float>& t) {
  dsp::ComplexSpectrogram s(t.size(1), t.size(2));
  for (std::size_t f = 0; f < t.size(1); ++f)
    for (std::size_t k = 0; k < t.size(2); ++k) {
      const float* z = t.storage().data() + (f * t.size(2) + k) * 2;
      s.at(f, k) = {z[0], z[1]};
    }
  return s;
}

// Randomises the zero-initialised output layers so every parameter reaches the loss.
template <typename T>
void jitter(ag::ParamStore<T>& store, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> d(-0.3, 0.3);
  for (const auto& p : store.params()) {
    auto t = p.value;
    for (auto& v : t.storage())
      if (v == T(0)) v = static_cast<T>(d(rng));
  }
}

}  // namespace

TEST_CASE("taer identity, mute and shape configurations") {
  Taer<float> taer(EnhancementConfig::toy(), 1);
  auto wide = random_spec(100, 160, 2);
  auto y = taer.forward(wide);
  CHECK(y.shape() == Shape{1, 100, 160, 2});
  taer.set_gain_override(1.0f);
  CHECK(taer.forward(wide).storage() == wide.storage());
  taer.set_gain_override(0.0f);
  auto muted = taer.forward(wide);
  for (float v : muted.storage()) REQUIRE(v == 0.0f);
  CHECK_THROWS_AS(taer.forward(random_spec(4, 161, 3)), ShapeError);
}

TEST_CASE("fbm unet gain range and shapes") {
  FbmUnet<float> unet(EnhancementConfig::toy(), 4);
  std::mt19937_64 rng(5);
  for (std::size_t frames : {1u, 5u, 33u}) {
    Tensor<float> feats(Shape{1, frames, 32}, std::vector<float>(frames * 32));
    for (auto& v : feats.storage()) v = std::uniform_real_distribution<float>(-10, 0)(rng);
    auto g = unet.forward(feats);
    REQUIRE(g.shape() == Shape{1, frames, 32});
    for (float v : g.storage()) REQUIRE((v > 0.0f && v < 1.0f));
  }
  unet.zero_output_layer();
  auto half = unet.forward(Tensor<float>::zeros(Shape{1, 7, 32}));
  for (float v : half.storage()) REQUIRE(v == 0.5f);
  CHECK_THROWS_AS(unet.forward(Tensor<float>::zeros(Shape{1, 7, 31})), ShapeError);
}

TEST_CASE("erb graph ops agree with the filterbank") {
  const auto& bank = fb::default_erb_bank();
  auto spec = random_spec(6, 481, 6);
  auto feats = erb_features(spec, bank);
  auto plain = fb::erb_split(to_plain(spec), bank);
  REQUIRE(feats.numel() == plain.size());
  double worst = 0;
  for (std::size_t i = 0; i < plain.size(); ++i) worst = std::max(worst, double(std::abs(feats.storage()[i] - plain[i])));
  CHECK(worst < 1e-4);

  std::mt19937_64 rng(7);
  std::vector<float> g(6 * 32);
  for (auto& v : g) v = std::uniform_real_distribution<float>(0, 1)(rng);
  auto applied = erb_apply_gains(spec, Tensor<float>(Shape{1, 6, 32}, g), bank);
  auto oracle = fb::erb_apply_gains(to_plain(spec), g, bank);
  worst = 0;
  for (std::size_t t = 0; t < 6; ++t)
    for (std::size_t k = 0; k < 481; ++k) {
      const float* z = applied.storage().data() + (t * 481 + k) * 2;
      worst = std::max(worst, double(std::abs(std::complex<float>(z[0], z[1]) - oracle.at(t, k))));
      // Gains never exceed one, so no bin grows.
      const float* x = spec.storage().data() + (t * 481 + k) * 2;
      REQUIRE(std::hypot(z[0], z[1]) <= std::hypot(x[0], x[1]) * (1 + 1e-6f));
    }
  CHECK(worst < 1e-5);

  auto ones = erb_apply_gains(spec, Tensor<float>(Shape{1, 6, 32}, std::vector<float>(6 * 32, 1.0f)), bank);
  double rel = 0;
  for (std::size_t i = 0; i < spec.numel(); ++i) {
    rel = std::max(rel, std::abs(double(ones.storage()[i]) - spec.storage()[i]) / (std::abs(double(spec.storage()[i])) + 1e-12));
  }
  CHECK(rel < 1e-6);
  CHECK_THROWS_AS(erb_apply_gains(spec, Tensor<float>::zeros(Shape{1, 5, 32}), bank), ShapeError);
}

TEST_CASE("band merge") {
  EnhancementConfig cfg;
  CHECK(merge_weight(151, cfg) == 1.0);
  CHECK(merge_weight(152, cfg) == 1.0);
  CHECK(merge_weight(156, cfg) == 0.5);
  CHECK(merge_weight(159, cfg) == 0.125);
  CHECK(merge_weight(160, cfg) == 0.0);
  CHECK(merge_weight(480, cfg) == 0.0);

  auto full = random_spec(4, 481, 8);
  auto same = ag::slice(full, 2, 0, 160);
  CHECK(band_merge(same, full, cfg).storage() == full.storage());

  auto other = random_spec(4, 160, 9);
  auto merged = band_merge(other, full, cfg);
  for (std::size_t t = 0; t < 4; ++t)
    for (std::size_t k = 0; k < 481; ++k)
      for (std::size_t c = 0; c < 2; ++c) {
        const std::size_t i = (t * 481 + k) * 2 + c;
        if (k >= 160) REQUIRE(merged.storage()[i] == full.storage()[i]);
        if (k < 152) REQUIRE(merged.storage()[i] == other.storage()[(t * 160 + k) * 2 + c]);
      }

  // Scalar multiples of one spectrum: merged energy lies between the branch energies.
  auto wide_a = ag::scale(ag::slice(full, 2, 0, 160), 0.3f), full_b = ag::scale(full, 2.0f);
  auto m2 = band_merge(wide_a, full_b, cfg);
  for (std::size_t t = 0; t < 4; ++t) {
    double e_m = 0, e_a = 0, e_b = 0;
    for (std::size_t k = 0; k < 481; ++k)
      for (std::size_t c = 0; c < 2; ++c) {
        const float x = full.storage()[(t * 481 + k) * 2 + c];
        const float m = m2.storage()[(t * 481 + k) * 2 + c];
        e_m += double(m) * m;
        e_a += 0.09 * x * x;
        e_b += 4.0 * x * x;
      }
    CHECK(e_m >= std::min(e_a, e_b));
    CHECK(e_m <= std::max(e_a, e_b));
  }
  CHECK_THROWS_AS(band_merge(random_spec(4, 150, 1), full, cfg), ShapeError);
}

TEST_CASE("enhancer identity path") {
  Enhancer<float> enh(EnhancementConfig::toy(), 10);
  auto spec = random_spec(8, 481, 11);
  enh.taer.set_gain_override(1.0f);
  auto wide = enh.taer.forward(ag::slice(spec, 2, 0, 160));
  const auto& bank = fb::default_erb_bank();
  auto full = erb_apply_gains(spec, Tensor<float>(Shape{1, 8, 32}, std::vector<float>(8 * 32, 1.0f)), bank);
  auto out = band_merge(wide, full, enh.cfg);
  double worst = 0;
  for (std::size_t i = 0; i < spec.numel(); ++i) worst = std::max(worst, double(std::abs(out.storage()[i] - spec.storage()[i])));
  CHECK(worst < 1e-6);
  CHECK(enh.forward(spec).shape() == spec.shape());
}

TEST_CASE("enhancer is causal and streams like offline") {
  Enhancer<double> enh(tiny_cfg(), 12);
  jitter(enh.taer.params(), 13);
  std::mt19937_64 rng(14);
  auto spec = random_tensor(Shape{1, 10, 481, 2}, rng, -1, 1);
  auto base = enh.forward(spec);
  for (std::size_t t0 : {0u, 4u, 9u}) {
    auto bumped = Tensor<double>(spec.shape(), spec.storage());
    for (std::size_t k = 0; k < 962; ++k) bumped.storage()[t0 * 962 + k] *= 1.5;
    auto out = enh.forward(bumped);
    for (std::size_t i = 0; i < t0 * 962; ++i) REQUIRE(out.storage()[i] == base.storage()[i]);
  }
  ag::StreamCache<double> cache;
  ag::NoGradGuard guard;
  double worst = 0;
  for (std::size_t t = 0; t < 10; ++t) {
    ag::Timeline<double> tl(cache);
    auto y = enh.forward(ag::slice(spec, 1, t, t + 1), tl);
    for (std::size_t i = 0; i < 962; ++i) worst = std::max(worst, std::abs(y.storage()[i] - base.storage()[t * 962 + i]));
  }
  CHECK(worst < 1e-12);
}

TEST_CASE("enhancement gradients match finite differences") {
  std::mt19937_64 rng(15);
  SUBCASE("taer") {
    auto cfg = tiny_cfg();
    cfg.wideband_cutoff_bin = 32;
    cfg.crossfade_bins = 4;
    Taer<double> taer(cfg, 16);
    jitter(taer.params(), 17);
    // Magnitudes kept away from zero where the compression is not differentiable.
    auto wide = random_tensor(Shape{1, 3, 32, 2}, rng, 0.2, 1.0);
    auto proj = random_tensor(Shape{1, 3, 32, 2}, rng, -1, 1);
    auto loss = [&] { return ag::sum(ag::mul(taer.forward(wide), proj)); };
    auto rep = gradcheck(loss, taer.params().tensors(), 1e-5, 1e-3, 1e-7, 10);
    CHECK_MESSAGE(rep.ok, rep.worst_where << " " << rep.worst_rel);
    auto rep_in = gradcheck(loss, {wide}, 1e-5, 1e-3, 1e-7, 40);
    CHECK_MESSAGE(rep_in.ok, rep_in.worst_where << " " << rep_in.worst_rel);
  }
  SUBCASE("fbm unet") {
    FbmUnet<double> unet(tiny_cfg(), 18);
    jitter(unet.params(), 19);
    auto feats = random_tensor(Shape{1, 4, 32}, rng, -8, 0);
    auto proj = random_tensor(Shape{1, 4, 32}, rng, -1, 1);
    auto loss = [&] { return ag::sum(ag::mul(unet.forward(feats), proj)); };
    auto rep = gradcheck(loss, unet.params().tensors(), 1e-5, 1e-3, 1e-7, 10);
    CHECK_MESSAGE(rep.ok, rep.worst_where << " " << rep.worst_rel);
  }
  SUBCASE("erb ops and band merge") {
    const auto& bank = fb::default_erb_bank();
    auto spec = random_tensor(Shape{1, 2, 481, 2}, rng, -1, 1);
    auto gains = random_tensor(Shape{1, 2, 32}, rng, 0, 1);
    auto proj = random_tensor(Shape{1, 2, 481, 2}, rng, -1, 1);
    auto rf = gradcheck([&] { return ag::sum(erb_features(spec, bank)); }, {spec}, 1e-6, 1e-3, 1e-7, 60);
    CHECK_MESSAGE(rf.ok, rf.worst_where << " " << rf.worst_rel);
    auto rg = gradcheck([&] { return ag::sum(ag::mul(erb_apply_gains(spec, gains, bank), proj)); }, {spec, gains}, 1e-6,
                        1e-3, 1e-7, 60);
    CHECK_MESSAGE(rg.ok, rg.worst_where << " " << rg.worst_rel);
    EnhancementConfig cfg;
    auto wide = random_tensor(Shape{1, 2, 160, 2}, rng, -1, 1);
    auto rb = gradcheck([&] { return ag::sum(ag::mul(band_merge(wide, spec, cfg), proj)); }, {wide, spec}, 1e-6, 1e-3,
                        1e-7, 80);
    CHECK_MESSAGE(rb.ok, rb.worst_where << " " << rb.worst_rel);
  }
}

TEST_CASE("enhancement training step") {
  Enhancer<float> enh(tiny_cfg(), 20, ag::AdamWConfig{2e-3, 0.9, 0.999, 1e-8, 0.01});
  auto clean = Tensor<float>(Shape{1, 9600}, testsupport::sine(9600, 300, 0.3));
  auto noise = testsupport::white_noise(9600, 21, 0.1f);
  std::vector<float> d(9600);
  for (std::size_t i = 0; i < d.size(); ++i) d[i] = clean.storage()[i] + noise[i];
  Tensor<float> degraded(Shape{1, 9600}, d);

  losses::LossWeights mag_only;
  mag_only.cplx = 0;
  auto r0 = enhance_loss(enh, clean, degraded, mag_only);
  CHECK(r0.total == doctest::Approx(0.5 * r0.mag).epsilon(1e-6));

  const double first = enhance_train_step(enh, clean, degraded).total;
  double last = first;
  for (int i = 0; i < 30; ++i) last = enhance_train_step(enh, clean, degraded).total;
  MESSAGE("enhancement loss " << first << " -> " << last);
  CHECK(last < first);
  CHECK(enh.taer_opt.step == 31);
  CHECK(enh.unet_opt.step == 31);
}

TEST_CASE("enhancement checkpoints") {
  Enhancer<float> a(EnhancementConfig::toy(), 22), b(EnhancementConfig::toy(), 23);
  auto spec = random_spec(5, 481, 24);
  import_taer(b, decode_checkpoint(encode_checkpoint(export_taer(a))));
  import_unet(b, decode_checkpoint(encode_checkpoint(export_unet(a))));
  CHECK(a.forward(spec).storage() == b.forward(spec).storage());
  Enhancer<float> c(tiny_cfg(), 1);
  CHECK_THROWS_AS(import_taer(c, export_taer(a)), ValidationError);
}
