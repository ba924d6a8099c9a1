#include <doctest.h>

#include <cmath>
#include <complex>
#include <numbers>
#include <random>

#include "support/signals.hpp"
#include "voxmend/degrade.hpp"
#include "voxmend/dsp/wav.hpp"
#include "voxmend/error.hpp"

using namespace voxmend;
using namespace voxmend::sim;
using dsp::Waveform;

namespace {

double power(const Waveform& w) { return testsupport::energy(w.samples) / static_cast<double>(w.size()); }

// T20 on the Schroeder curve from the direct arrival: regression over -5..-25 dB.
double measured_t60(const Waveform& rir, std::size_t from) {
  const auto edc = energy_decay_db(rir, from);
  double sx = 0, sy = 0, sxx = 0, sxy = 0;
  int n = 0;
  for (std::size_t i = 0; i < edc.size(); ++i) {
    if (edc[i] > -5 || edc[i] < -25) continue;
    const double t = static_cast<double>(i) / 48000.0;
    sx += t;
    sy += edc[i];
    sxx += t * t;
    sxy += t * edc[i];
    ++n;
  }
  const double slope = (n * sxy - sx * sy) / (n * sxx - sx * sx);
  return -60.0 / slope;
}

double response_db(const std::vector<double>& h, double hz) {
  std::complex<double> acc = 0;
  const int mid = static_cast<int>(h.size() / 2);
  for (std::size_t i = 0; i < h.size(); ++i) {
    acc += h[i] * std::polar(1.0, -2 * std::numbers::pi * hz / 48000.0 * (static_cast<int>(i) - mid));
  }
  return 20 * std::log10(std::abs(acc) + 1e-300);
}

}  // namespace

TEST_CASE("image method direct path") {
  RoomSpec room;
  const auto rir = simulate_rir(room);
  const double expected = room.direct_distance() / room.speed_of_sound * 48000.0;
  std::size_t first = 0;
  while (rir.samples[first] == 0.0f) ++first;
  CHECK(std::abs(static_cast<double>(first) - expected) <= 1.0);
  // Direct impulse amplitude 1 / (4 pi d), split over two samples.
  const double direct = rir.samples[first] + rir.samples[first + 1];
  CHECK(direct == doctest::Approx(1 / (4 * std::numbers::pi * room.direct_distance())).epsilon(1e-5));
  const auto edc = energy_decay_db(rir, first);
  for (std::size_t i = 1; i < edc.size(); ++i) REQUIRE(edc[i] <= edc[i - 1]);
}

TEST_CASE("image method reverberation time against eyring") {
  RoomSpec room;
  const auto rir = simulate_rir(room);
  std::size_t first = 0;
  while (rir.samples[first] == 0.0f) ++first;
  const double eyring = eyring_t60(room);
  const double t60 = measured_t60(rir, first);
  MESSAGE("eyring " << eyring << " measured " << t60);
  CHECK(std::abs(t60 / eyring - 1) < 0.2);
}

TEST_CASE("image method order 0 and anechoic walls") {
  RoomSpec room;
  room.max_order = 0;
  auto rir = simulate_rir(room);
  int nonzero = 0;
  for (float v : rir.samples) nonzero += v != 0.0f;
  CHECK(nonzero <= 2);
  room.max_order = 5;
  room.beta.fill(0.0);
  rir = simulate_rir(room);
  nonzero = 0;
  for (float v : rir.samples) nonzero += v != 0.0f;
  CHECK(nonzero <= 2);
  room.mic = {5, 1, 1};
  CHECK_THROWS_AS(simulate_rir(room), ValidationError);
}

TEST_CASE("first order images") {
  RoomSpec room;
  room.max_order = 1;
  room.beta = {0.9, 0.8, 0.7, 0.6, 0.5, 0.4};
  const auto rir = simulate_rir(room);
  // Brute force: direct plus one mirror per wall.
  std::vector<std::pair<std::array<double, 3>, double>> images{{room.source, 1.0}};
  for (std::size_t a = 0; a < 3; ++a) {
    auto lo = room.source, hi = room.source;
    lo[a] = -room.source[a];
    hi[a] = 2 * room.dims[a] - room.source[a];
    images.push_back({lo, room.beta[2 * a]});
    images.push_back({hi, room.beta[2 * a + 1]});
  }
  std::vector<double> expect(rir.size() + 2, 0.0);
  for (const auto& [pos, gain] : images) {
    double d2 = 0;
    for (std::size_t a = 0; a < 3; ++a) d2 += (pos[a] - room.mic[a]) * (pos[a] - room.mic[a]);
    const double d = std::sqrt(d2), delay = d / 343.0 * 48000.0;
    const auto i = static_cast<std::size_t>(delay);
    expect[i] += (1 - (delay - i)) * gain / (4 * std::numbers::pi * d);
    expect[i + 1] += (delay - i) * gain / (4 * std::numbers::pi * d);
  }
  for (std::size_t i = 0; i < rir.size(); ++i) CHECK(rir.samples[i] == doctest::Approx(expect[i]).epsilon(1e-5));
}

TEST_CASE("eyring formula") {
  RoomSpec room;
  room.dims = {2, 3, 4};
  room.source = {0.5, 0.5, 0.5};
  room.mic = {1.5, 2.5, 3.5};
  room.beta.fill(std::sqrt(0.5));  // alpha = 0.5 everywhere
  const double v = 24, s = 2 * (6 + 8 + 12);
  CHECK(eyring_t60(room) == doctest::Approx(0.161 * v / (-s * std::log(0.5))).epsilon(2e-3));
}

TEST_CASE("reverb is linear convolution") {
  Waveform x(testsupport::white_noise(300, 1));
  Waveform h(testsupport::white_noise(40, 2));
  const auto y = apply_reverb(x, h);
  REQUIRE(y.size() == 339);
  for (std::size_t n = 0; n < y.size(); n += 7) {
    double acc = 0;
    for (std::size_t k = 0; k < h.size(); ++k)
      if (n >= k && n - k < x.size()) acc += static_cast<double>(h.samples[k]) * x.samples[n - k];
    CHECK(y.samples[n] == doctest::Approx(acc).epsilon(1e-5));
  }
}

TEST_CASE("mix at snr") {
  Waveform clean(testsupport::sine(48000, 440, 0.3));
  Waveform noise(testsupport::white_noise(10000, 3));  // looped
  for (double snr : {-5.0, 0.0, 5.0, 12.5, 25.0}) {
    const auto n = scaled_noise(clean, noise, snr);
    const double got = 10 * std::log10(power(clean) / power(n));
    CHECK(std::abs(got - snr) < 0.1);
    const auto mixed = mix_at_snr(clean, noise, snr);
    CHECK(mixed.samples[100] == doctest::Approx(clean.samples[100] + n.samples[100]));
  }
  CHECK(mix_at_snr(clean, noise, std::numeric_limits<double>::infinity()).samples == clean.samples);
  CHECK_THROWS_AS(mix_at_snr(clean, Waveform(std::vector<float>(100, 0.0f)), 5), ValidationError);
}

TEST_CASE("lowpass response") {
  for (double fc : {1000.0, 4000.0, 8000.0, 16000.0}) {
    const auto h = lowpass_taps(fc);
    REQUIRE(h.size() == kLowpassTaps);
    for (std::size_t i = 0; i < h.size(); ++i) CHECK(h[i] == doctest::Approx(h[h.size() - 1 - i]));
    CHECK(response_db(h, 0) == doctest::Approx(0).epsilon(1e-9));
    double worst = -1e9;
    for (double f = 1.1 * fc; f <= 24000; f += 10) worst = std::max(worst, response_db(h, f));
    MESSAGE("fc " << fc << " stopband peak " << worst << " dB");
    CHECK(worst <= -40);
    CHECK(response_db(h, 0.5 * fc) > -1);
  }
  CHECK(lowpass_taps(24000).size() == 1);
  Waveform x(testsupport::white_noise(2000, 5));
  CHECK(lowpass(x, 24000).samples == x.samples);
  // Filtering equals direct zero-phase convolution.
  const auto h = lowpass_taps(3000);
  const auto y = lowpass(x, 3000);
  for (std::size_t n : {0u, 50u, 1000u, 1999u}) {
    double acc = 0;
    for (std::size_t k = 0; k < h.size(); ++k) {
      const long idx = static_cast<long>(n) + 127 - static_cast<long>(k);
      if (idx >= 0 && idx < 2000) acc += h[k] * x.samples[static_cast<std::size_t>(idx)];
    }
    CHECK(y.samples[n] == doctest::Approx(acc).epsilon(1e-5));
  }
}

TEST_CASE("pointwise nonlinearities") {
  Waveform x(std::vector<float>{-1.0f, -0.5f, 0.0f, 0.2f, 0.9f});
  CHECK(clip(x, 0.5).samples == std::vector<float>{-0.5f, -0.5f, 0.0f, 0.2f, 0.5f});
  CHECK(halfwave_rectify(x).samples == std::vector<float>{0.0f, 0.0f, 0.0f, 0.2f, 0.9f});
  const auto d = nonlinear_distort(x, 3.0);
  CHECK(d.samples[0] == doctest::Approx(-1.0));
  CHECK(d.samples[3] == doctest::Approx(std::tanh(0.6) / std::tanh(3.0)));
  CHECK_THROWS_AS(nonlinear_distort(x, 0.0), ValidationError);
  CHECK_THROWS_AS(clip(x, 0.0), ValidationError);
}

TEST_CASE("packet loss statistics") {
  std::mt19937_64 rng(42);
  for (double rate : {0.05, 0.1, 0.3}) {
    const auto lost = gilbert_losses(100000, rate, 2.0, rng);
    double count = 0, runs = 0;
    for (std::size_t i = 0; i < lost.size(); ++i) {
      count += lost[i];
      runs += lost[i] && (i == 0 || !lost[i - 1]);
    }
    CHECK(std::abs(count / 1e5 - rate) < 0.01);
    CHECK(count / runs == doctest::Approx(2.0).epsilon(0.1));
  }
  CHECK(gilbert_losses(10, 0.0, 2, rng) == std::vector<bool>(10, false));
  CHECK(gilbert_losses(10, 1.0, 2, rng) == std::vector<bool>(10, true));
  CHECK_THROWS_AS(gilbert_losses(10, 0.9, 1.0, rng), ValidationError);
}

TEST_CASE("packet loss ramps") {
  Waveform x(std::vector<float>(4 * kPacketFrame, 1.0f));
  const auto y = apply_losses(x, {false, true, false, false});
  const std::size_t a = kPacketFrame, b = 2 * kPacketFrame;
  CHECK(y.samples[a - 1] == 1.0f);
  CHECK(y.samples[a] > 0.99f);
  CHECK(y.samples[a + kPacketRamp - 1] < 0.01f);
  CHECK(y.samples[a + kPacketRamp] == 0.0f);
  CHECK(y.samples[b - kPacketRamp - 1] == 0.0f);
  CHECK(y.samples[b - 1] > 0.99f);
  CHECK(y.samples[b] == 1.0f);
  for (std::size_t n = a; n + 1 < a + kPacketRamp; ++n) CHECK(y.samples[n + 1] <= y.samples[n]);
  // Rate 1 leaves only silence.
  std::mt19937_64 rng(1);
  const auto z = packet_loss(x, 1.0, 2.0, rng);
  CHECK(testsupport::energy(z.samples) == 0.0);
}

TEST_CASE("codec surrogate") {
  Waveform x(testsupport::white_noise(48000, 7));
  const auto y = codec_surrogate(x, CodecLevel::Low);
  const auto cfg = dsp::StftConfig::standard();
  const auto s = dsp::stft(y, cfg);
  double hi = 0, total = 0;
  for (std::size_t t = 2; t + 2 < s.frames; ++t)
    for (std::size_t k = 0; k < s.bins; ++k) {
      const double e = std::norm(std::complex<double>(s.at(t, k)));
      total += e;
      if (k * 50 > 13000) hi += e;
    }
  CHECK(hi / total < 1e-8);
  CHECK(codec_surrogate(x, CodecLevel::None).samples == x.samples);

  // Quantisation is idempotent on spectra.
  auto spec = dsp::stft(x, cfg);
  quantize_spectrum(spec, CodecLevel::Med);
  auto again = spec;
  quantize_spectrum(again, CodecLevel::Med);
  double diff = 0, ref = 0;
  for (std::size_t t = 0; t < spec.frames; ++t)
    for (std::size_t k = 0; k < spec.bins; ++k) {
      diff = std::max(diff, static_cast<double>(std::abs(spec.at(t, k) - again.at(t, k))));
      ref = std::max(ref, static_cast<double>(std::abs(spec.at(t, k))));
    }
  CHECK(diff / ref < 1e-5);
  CHECK(parse_codec_level("high") == CodecLevel::High);
  CHECK_THROWS_AS(parse_codec_level("ultra"), ValidationError);
}

TEST_CASE("simulate pair") {
  auto clean = dsp::read_wav(testsupport::fixture("speech_like_10s.wav"));
  clean.samples.resize(96000);
  Waveform noise(testsupport::white_noise(20000, 9));

  DegradationRecipe snr_only;
  snr_only.seed = 3;
  snr_only.snr_db = 5.0;
  auto p = simulate_pair(clean, noise, snr_only);
  double peak = 0;
  for (float v : p.target.samples) peak = std::max(peak, static_cast<double>(std::abs(v)));
  double dpeak = 0;
  for (float v : p.degraded.samples) dpeak = std::max(dpeak, static_cast<double>(std::abs(v)));
  if (dpeak < 1.0) CHECK(20 * std::log10(peak) == doctest::Approx(-3.0).epsilon(1e-4));
  Waveform resid = p.degraded;
  for (std::size_t i = 0; i < resid.size(); ++i) resid.samples[i] -= p.target.samples[i];
  CHECK(std::abs(10 * std::log10(power(p.target) / power(resid)) - 5.0) < 0.1);

  DegradationRecipe all;
  all.seed = 11;
  all.snr_db = 0.0;
  all.rir = RoomSpec{};
  all.rir->max_order = 8;
  all.cutoff_hz = 4000;
  all.clip_level = 0.3;
  all.drive = 2.0;
  all.packet_loss_rate = 0.1;
  all.codec = CodecLevel::Med;
  const auto a = simulate_pair(clean, noise, all);
  const auto b = simulate_pair(clean, noise, all);
  CHECK(a.degraded.samples == b.degraded.samples);
  CHECK(a.degraded.size() == clean.size());
  CHECK(a.target.size() == clean.size());
  for (float v : a.degraded.samples) REQUIRE(std::abs(v) <= 1.0f);

  CHECK_THROWS_AS(simulate_pair(Waveform(std::vector<float>(100)), noise, snr_only), ValidationError);
  CHECK_THROWS_AS(simulate_pair(clean, Waveform(std::vector<float>(10, 0.1f)), snr_only), ValidationError);
}

TEST_CASE("recipes and manifests") {
  for (std::uint64_t seed = 0; seed < 40; ++seed) {
    const auto r = sample_recipe(seed);
    const auto j = recipe_to_json(r);
    CHECK(recipe_to_json(recipe_from_json(j)) == j);
  }
  CHECK(recipe_to_json(sample_recipe(5)) == recipe_to_json(sample_recipe(5)));
  CHECK_THROWS_AS(recipe_from_json("{\"snr\": 3}"), ParseError);
  CHECK_THROWS_AS(recipe_from_json("{\"snr_db\": 90}"), ValidationError);
  CHECK_THROWS_AS(recipe_from_json("not json"), ParseError);

  ManifestEntry e{"a.wav", "n.wav", sample_recipe(2)};
  const auto text = manifest_line(e) + "\n\n" + manifest_line(e) + "\n";
  const auto parsed = parse_manifest(text);
  REQUIRE(parsed.size() == 2);
  CHECK(parsed[1].clean_path == "a.wav");
  CHECK(manifest_line(parsed[0]) == manifest_line(e));
  try {
    parse_manifest(manifest_line(e) + "\n{\"clean_path\": 1}\n");
    FAIL("expected a parse error");
  } catch (const ParseError& err) {
    CHECK(std::string(err.what()).find("line 2") != std::string::npos);
  }
}
