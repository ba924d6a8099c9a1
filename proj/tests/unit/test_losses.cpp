#include <doctest.h>

#include <cmath>
#include <numbers>
#include <random>

#include "support/gradcheck.hpp"
#include "support/signals.hpp"
#include "voxmend/error.hpp"
#include "voxmend/losses.hpp"

using namespace voxmend;
using namespace voxmend::losses;
using ag::Shape;
using testsupport::gradcheck;
using testsupport::random_tensor;

namespace {

Tensor<double> filled(Shape s, double v) { return Tensor<double>(s, std::vector<double>(ag::numel(s), v)); }

// Frame-by-frame magnitude with a direct DFT: periodic Hann, hop r/4,
// trailing zero padding up to the last partial frame.
std::vector<std::vector<double>> direct_mag(const std::vector<double>& x, std::size_t r) {
  const std::size_t hop = r / 4;
  const std::size_t frames = x.size() <= r ? 1 : 1 + (x.size() - r + hop - 1) / hop;
  std::vector<std::vector<double>> out(frames, std::vector<double>(r / 2 + 1));
  std::vector<double> buf(r);
  for (std::size_t t = 0; t < frames; ++t) {
    for (std::size_t i = 0; i < r; ++i) {
      const double w = 0.5 - 0.5 * std::cos(2 * std::numbers::pi * static_cast<double>(i) / static_cast<double>(r));
      const std::size_t j = t * hop + i;
      buf[i] = j < x.size() ? w * x[j] : 0.0;
    }
    for (std::size_t k = 0; k <= r / 2; ++k) out[t][k] = std::abs(testsupport::dft_bin(buf, k));
  }
  return out;
}

double oracle_resolution(const std::vector<double>& s, const std::vector<double>& sh, std::size_t r) {
  auto a = direct_mag(s, r), b = direct_mag(sh, r);
  double l1 = 0, num = 0, den = 0;
  std::size_t cnt = 0;
  for (std::size_t t = 0; t < a.size(); ++t)
    for (std::size_t k = 0; k < a[t].size(); ++k) {
      l1 += std::abs(std::log(a[t][k] + 1e-5) - std::log(b[t][k] + 1e-5));
      num += (a[t][k] - b[t][k]) * (a[t][k] - b[t][k]);
      den += b[t][k] * b[t][k];
      ++cnt;
    }
  return l1 / static_cast<double>(cnt) + std::sqrt(num) / std::sqrt(den);
}

std::vector<double> rand_vec(std::size_t n, std::uint64_t seed, double lo = -1, double hi = 1) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> d(lo, hi);
  std::vector<double> v(n);
  for (auto& x : v) x = d(rng);
  return v;
}

}  // namespace

TEST_CASE("spectral convergence and log magnitude analytic values") {
  std::mt19937_64 rng(1);
  auto x = random_tensor(Shape{4, 4}, rng, 0.1, 2.0);
  CHECK(spectral_convergence(x, x).item() == 0.0);
  CHECK(spectral_convergence(x, ag::scale(x, 2.0)).item() == doctest::Approx(0.5).epsilon(1e-12));
  CHECK(log_mag_l1(x, x).item() == 0.0);
  CHECK(log_mag_l1(x, ag::scale(x, std::exp(1.0))).item() == doctest::Approx(1.0).epsilon(1e-4));

  auto y = random_tensor(Shape{4, 4}, rng, 0.1, 2.0);
  double num = 0, den = 0, l1 = 0;
  for (std::size_t i = 0; i < 16; ++i) {
    const double a = x.storage()[i], b = y.storage()[i];
    num += (a - b) * (a - b);
    den += b * b;
    l1 += std::abs(std::log(a + 1e-5) - std::log(b + 1e-5));
  }
  CHECK(spectral_convergence(x, y).item() == doctest::Approx(std::sqrt(num / den)).epsilon(1e-12));
  CHECK(log_mag_l1(x, y).item() == doctest::Approx(l1 / 16).epsilon(1e-12));

  CHECK_THROWS_AS(spectral_convergence(x, filled(Shape{4, 4}, 0.0)), NumericalError);
  CHECK_THROWS_AS(spectral_convergence(x, filled(Shape{2, 8}, 1.0)), ShapeError);
}

TEST_CASE("lsgan and feature matching analytic values") {
  const Shape s{2, 1, 5, 3};
  CHECK(lsgan_g_loss<double>({filled(s, 1.0), filled(s, 1.0)}).item() == 0.0);
  CHECK(lsgan_g_loss<double>({filled(s, 0.0)}).item() == 1.0);
  CHECK(lsgan_d_loss(filled(s, 1.0), filled(s, 0.0)).item() == 0.0);
  CHECK(lsgan_d_loss(filled(s, 0.0), filled(s, 1.0)).item() == 2.0);

  std::mt19937_64 rng(2);
  auto a = random_tensor(s, rng, -1, 1), b = random_tensor(Shape{3, 4}, rng, -1, 1);
  auto c = random_tensor(s, rng, -1, 1);
  CHECK(feature_match_loss<double>({a, b}, {a, b}).item() == 0.0);
  CHECK(feature_match_loss<double>({a, b}, {ag::add_scalar(a, 1.0), ag::add_scalar(b, 1.0)}).item() ==
        doctest::Approx(1.0).epsilon(1e-12));

  double g = 0, d_real = 0, d_fake = 0, fm = 0;
  for (std::size_t i = 0; i < a.numel(); ++i) {
    g += (1 - a.storage()[i]) * (1 - a.storage()[i]);
    d_real += (c.storage()[i] - 1) * (c.storage()[i] - 1);
    d_fake += a.storage()[i] * a.storage()[i];
    fm += std::abs(a.storage()[i] - c.storage()[i]);
  }
  const double n = static_cast<double>(a.numel());
  CHECK(lsgan_g_loss<double>({a}).item() == doctest::Approx(g / n).epsilon(1e-12));
  CHECK(lsgan_d_loss(c, a).item() == doctest::Approx((d_real + d_fake) / n).epsilon(1e-12));
  // Two discriminators: one with the random gap, one identical.
  const double per_disc = fm / n;
  using Feats = std::vector<std::vector<Tensor<double>>>;
  CHECK(feature_match_loss(Feats{{a}, {b}}, Feats{{c}, {b}}).item() == doctest::Approx(per_disc / 2).epsilon(1e-12));
  CHECK_THROWS_AS(feature_match_loss<double>({a}, {a, b}), ShapeError);
  CHECK_THROWS_AS(lsgan_g_loss<double>({}), ShapeError);
}

TEST_CASE("compressed spectral losses") {
  const Shape s{3, 4, 2};
  auto one = Tensor<double>(s, {1, 0, 1, 0, 1, 0, 1, 0, 1, 0, 1, 0, 1, 0, 1, 0, 1, 0, 1, 0, 1, 0, 1, 0});
  auto minus = ag::scale(one, -1.0);
  CHECK(compressed_complex_loss(one, one).item() == 0.0);
  CHECK(compressed_complex_loss(one, minus).item() == doctest::Approx(4.0).epsilon(1e-9));
  CHECK(compressed_mag_loss(one, one).item() == 0.0);
  CHECK(compressed_mag_loss(one, filled(s, 0.0)).item() == doctest::Approx(1.0).epsilon(1e-12));

  std::mt19937_64 rng(3);
  auto x = random_tensor(s, rng, -2, 2), y = random_tensor(s, rng, -2, 2);
  double cplx = 0, mag = 0;
  for (std::size_t i = 0; i < 12; ++i) {
    const std::complex<double> zx(x.storage()[2 * i], x.storage()[2 * i + 1]);
    const std::complex<double> zy(y.storage()[2 * i], y.storage()[2 * i + 1]);
    auto c = [](std::complex<double> z) { return std::pow(std::abs(z), 0.3) * z / (std::abs(z) + 1e-10); };
    cplx += std::norm(c(zx) - c(zy));
    const double dm = std::pow(std::abs(zx), 0.3) - std::pow(std::abs(zy), 0.3);
    mag += dm * dm;
  }
  CHECK(compressed_complex_loss(x, y).item() == doctest::Approx(cplx / 12).epsilon(1e-9));
  CHECK(compressed_mag_loss(x, y).item() == doctest::Approx(mag / 12).epsilon(1e-9));
  CHECK_THROWS_AS(compressed_mag_loss(x, filled(Shape{3, 2, 2}, 1.0)), ShapeError);
}

TEST_CASE("loss composition") {
  LossWeights w;
  auto z = filled(Shape{}, 0.0), o = filled(Shape{}, 1.0);
  CHECK(generator_total_loss(z, z, z, z, w).total.item() == 0.0);
  auto g = generator_total_loss(o, o, o, o, w);
  CHECK(g.total.item() == 23.0);
  CHECK(g.feat.item() == 1.0);
  auto e = enhancement_total_loss(filled(Shape{}, 0.7), filled(Shape{}, 0.3), w);
  CHECK(e.total.item() == doctest::Approx(0.5).epsilon(1e-12));
  LossWeights bad;
  bad.feat = -1;
  CHECK_THROWS_AS(generator_total_loss(o, o, o, o, bad), ValidationError);
}

TEST_CASE("mrstft loss against a direct DFT oracle") {
  const std::size_t len = 3000;
  auto s = rand_vec(len, 11), sh = rand_vec(len, 12);
  Tensor<double> ts(Shape{1, len}, s), tsh(Shape{1, len}, sh);
  MultiResConfig cfg;
  CHECK(mrstft_loss(ts, ts, cfg).item() == 0.0);
  double oracle = 0;
  for (auto r : cfg.fft_sizes) oracle += oracle_resolution(s, sh, r);
  CHECK(mrstft_loss(ts, tsh, cfg).item() == doctest::Approx(oracle).epsilon(1e-9));
  CHECK_THROWS_AS(mrstft_loss(ts, filled(Shape{1, len}, 0.0), cfg), NumericalError);
  CHECK_THROWS_AS(mrstft_loss(ts, filled(Shape{1, len - 1}, 0.1), cfg), ShapeError);
  MultiResConfig bad;
  bad.fft_sizes = {500};
  CHECK_THROWS_AS(mrstft_loss(ts, tsh, bad), ValidationError);
}

TEST_CASE("pqmf analysis op matches the filterbank and the subband oracle") {
  fb::PqmfBank bank;
  const std::size_t len = 4000;
  auto x = testsupport::white_noise(len, 21, 0.5f);
  auto bands = fb::pqmf_analyze(dsp::Waveform(x), bank);
  Tensor<double> tx(Shape{1, len}, std::vector<double>(x.begin(), x.end()));
  auto sub = pqmf_analysis(tx, bank);
  REQUIRE(sub.shape() == Shape{1, 4, 1000});
  double worst = 0;
  for (std::size_t k = 0; k < 4; ++k)
    for (std::size_t j = 0; j < 1000; ++j) worst = std::max(worst, std::abs(sub.storage()[k * 1000 + j] - bands[k][j]));
  CHECK(worst < 1e-6);

  auto y = rand_vec(len, 22, -0.5, 0.5);
  Tensor<double> ty(Shape{1, len}, y);
  auto suby = pqmf_analysis(ty, bank);
  MultiResConfig cfg;
  double oracle = 0;
  for (std::size_t k = 0; k < 4; ++k) {
    std::vector<double> a(sub.storage().begin() + k * 1000, sub.storage().begin() + (k + 1) * 1000);
    std::vector<double> b(suby.storage().begin() + k * 1000, suby.storage().begin() + (k + 1) * 1000);
    for (auto r : cfg.fft_sizes) oracle += oracle_resolution(a, b, r / 4);
  }
  CHECK(subband_mrstft_loss(tx, ty, bank, cfg).item() == doctest::Approx(oracle / 4).epsilon(1e-9));
  CHECK(subband_mrstft_loss(tx, tx, bank, cfg).item() == 0.0);
}

TEST_CASE("subband loss under a group-delay shift of both signals") {
  fb::PqmfBank bank;
  const std::size_t len = 6000, d = bank.group_delay();
  auto s = rand_vec(len, 31, -0.5, 0.5), sh = rand_vec(len, 32, -0.5, 0.5);
  for (std::size_t i = 0; i < len; ++i) sh[i] = 0.7 * s[i] + 0.3 * sh[i];
  std::vector<double> s_d(len + d, 0.0), sh_d(len + d, 0.0);
  std::copy(s.begin(), s.end(), s_d.begin() + static_cast<std::ptrdiff_t>(d));
  std::copy(sh.begin(), sh.end(), sh_d.begin() + static_cast<std::ptrdiff_t>(d));
  MultiResConfig cfg;
  const double base = subband_mrstft_loss(Tensor<double>(Shape{1, len}, s), Tensor<double>(Shape{1, len}, sh), bank, cfg).item();
  const double shifted =
      subband_mrstft_loss(Tensor<double>(Shape{1, len + d}, s_d), Tensor<double>(Shape{1, len + d}, sh_d), bank, cfg).item();
  MESSAGE("subband loss " << base << " shifted " << shifted);
  // Frame boundaries move relative to the content, so equality is approximate.
  CHECK(std::abs(shifted - base) < 0.05 * base);
}

TEST_CASE("loss gradients match finite differences") {
  std::mt19937_64 rng(41);
  SUBCASE("elementwise losses") {
    auto x = random_tensor(Shape{3, 4}, rng, 0.2, 2.0), y = random_tensor(Shape{3, 4}, rng, 0.2, 2.0);
    CHECK(gradcheck([&] { return spectral_convergence(x, y); }, {x, y}).ok);
    CHECK(gradcheck([&] { return log_mag_l1(x, y); }, {y}).ok);
    CHECK(gradcheck([&] { return lsgan_d_loss(x, y); }, {x, y}).ok);
    CHECK(gradcheck([&] { return lsgan_g_loss<double>({x, y}); }, {x, y}).ok);
    CHECK(gradcheck([&] { return feature_match_loss<double>({x}, {ag::scale(y, 3.0)}); }, {y}).ok);
  }
  SUBCASE("compressed losses") {
    auto x = random_tensor(Shape{2, 3, 2}, rng, -1, 1), y = random_tensor(Shape{2, 3, 2}, rng, -1, 1);
    CHECK(gradcheck([&] { return compressed_complex_loss(x, y); }, {x, y}).ok);
    CHECK(gradcheck([&] { return compressed_mag_loss(x, y); }, {x, y}).ok);
  }
  SUBCASE("multi-resolution losses") {
    MultiResConfig cfg;
    cfg.fft_sizes = {32, 64};
    auto s = random_tensor(Shape{1, 200}, rng, -1, 1), sh = random_tensor(Shape{1, 200}, rng, -1, 1);
    auto rep = gradcheck([&] { return mrstft_loss(s, sh, cfg); }, {sh}, 1e-6);
    CHECK_MESSAGE(rep.ok, rep.worst_where << " " << rep.worst_rel);
    fb::PqmfBank bank;
    auto a = random_tensor(Shape{1, 600}, rng, -1, 1), b = random_tensor(Shape{1, 600}, rng, -1, 1);
    MultiResConfig sub_cfg;
    sub_cfg.fft_sizes = {64, 128};
    auto rep2 = gradcheck([&] { return subband_mrstft_loss(a, b, bank, sub_cfg); }, {b}, 1e-6, 1e-3, 1e-7, 60);
    CHECK_MESSAGE(rep2.ok, rep2.worst_where << " " << rep2.worst_rel);
  }
}

TEST_CASE("losses are non-negative on random inputs") {
  std::mt19937_64 rng(51);
  for (int trial = 0; trial < 5; ++trial) {
    auto x = random_tensor(Shape{4, 3, 2}, rng, -1, 1), y = random_tensor(Shape{4, 3, 2}, rng, -1, 1);
    CHECK(compressed_complex_loss(x, y).item() > 0);
    CHECK(compressed_mag_loss(x, y).item() > 0);
    CHECK(lsgan_d_loss(x, y).item() > 0);
    CHECK(feature_match_loss<double>({x}, {y}).item() > 0);
  }
}
