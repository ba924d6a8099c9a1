#include <doctest.h>

#include <cmath>

#include "support/signals.hpp"
#include "voxmend/agc.hpp"
#include "voxmend/error.hpp"

using namespace voxmend;
using namespace testsupport;

namespace {

double rms_db(std::span<const float> x) {
  return 10.0 * std::log10(energy(x) / static_cast<double>(x.size()));
}

// Sine whose RMS is `db` dBFS; 1 kHz fits exactly 10 periods in a chunk.
std::vector<float> tone_at(double db, std::size_t n) {
  return sine(n, 1000.0, std::sqrt(2.0) * std::pow(10.0, db / 20.0));
}

}  // namespace

TEST_CASE("default table") {
  agc::GainTable t;
  CHECK(t.entries().size() == 128);
  CHECK(t.gain_db(-26.0) == doctest::Approx(0.0));
  CHECK(t.gain_db(-46.0) == doctest::Approx(20.0));
  CHECK(t.gain_db(-90.0) == doctest::Approx(30.0));
  CHECK(t.gain_db(0.0) == doctest::Approx(-26.0));
  CHECK(t.gain_db(-26.5) == doctest::Approx(0.5));
  for (std::size_t i = 1; i < t.entries().size(); ++i) CHECK(t.entries()[i] <= t.entries()[i - 1]);
}

TEST_CASE("table text format") {
  auto t = agc::GainTable::parse("# level gain\n-60 20\n-20 -10\n");
  CHECK(t.gain_db(-60) == doctest::Approx(20.0));
  CHECK(t.gain_db(-40) == doctest::Approx(5.0));
  CHECK(t.gain_db(-100) == doctest::Approx(20.0));
  CHECK(t.gain_db(-5) == doctest::Approx(-10.0));
  CHECK_THROWS_AS(agc::GainTable::parse("-60 20 7\n"), ParseError);
  CHECK_THROWS_AS(agc::GainTable::parse("-60 20\n-20 25\n"), ValidationError);
  CHECK_THROWS_AS(agc::GainTable::parse("-60 40\n"), ValidationError);
}

TEST_CASE("chunk length is enforced") {
  agc::AgcState st;
  std::vector<float> x(479, 0.1f);
  CHECK_THROWS_AS(agc::process_chunk(x, st), ShapeError);
}

TEST_CASE("silence holds the gain") {
  agc::AgcState st;
  st.current_gain = 3.0;
  auto out = agc::process_chunk(std::vector<float>(480, 0.0f), st);
  CHECK(st.current_gain == 3.0);
  for (float v : out) CHECK(v == 0.0f);
  auto w = agc::process(dsp::Waveform(std::vector<float>(5000, 0.0f)), st);
  for (float v : w.samples) CHECK(v == 0.0f);
}

TEST_CASE("chunk at target converges to unit gain") {
  agc::AgcState st;
  st.current_gain = 2.0;
  auto chunk = tone_at(-26.0, 480);
  for (int i = 0; i < 200; ++i) agc::process_chunk(chunk, st);
  CHECK(std::abs(st.current_gain - 1.0) < 0.01);
}

TEST_CASE("gain follows the smoothing recursion in closed form") {
  // g_k = G + a^k (g_0 - G) with G the table gain for the chunk level.
  agc::AgcState st;
  const double a = st.smoothing_coeff;
  const double target = std::pow(10.0, 20.0 / 20.0);
  auto chunk = tone_at(-46.0, 480);
  for (int k = 1; k <= 60; ++k) {
    agc::process_chunk(chunk, st);
    const double expect = target + std::pow(a, k) * (1.0 - target);
    CHECK(st.current_gain == doctest::Approx(expect).epsilon(1e-6));
  }
  auto out = agc::process_chunk(chunk, st);
  CHECK(std::abs(rms_db(out) - (-26.0)) < 1.0);
}

TEST_CASE("five second -40 dBFS tone ends near the target level") {
  agc::AgcState st;
  auto out = agc::process(dsp::Waveform(tone_at(-40.0, 5 * 48000)), st);
  std::span<const float> last(out.samples.data() + 4 * 48000, 48000);
  CHECK(std::abs(rms_db(last) - (-26.0)) < 1.0);
}

TEST_CASE("state threading, limiting and determinism") {
  auto x = white_noise(480 * 40 + 77, 9, 0.02f);
  for (std::size_t i = 9000; i < 12000; ++i) x[i] *= 40.0f;  // loud burst
  agc::AgcState whole_state;
  auto whole = agc::process(dsp::Waveform(x), whole_state);

  agc::AgcState split_state;
  const std::size_t cut = 480 * 17;
  auto a = agc::process(dsp::Waveform(std::vector<float>(x.begin(), x.begin() + cut)), split_state);
  auto b = agc::process(dsp::Waveform(std::vector<float>(x.begin() + cut, x.end())), split_state);
  a.samples.insert(a.samples.end(), b.samples.begin(), b.samples.end());
  CHECK(a.samples == whole.samples);

  agc::AgcState again_state;
  CHECK(agc::process(dsp::Waveform(x), again_state).samples == whole.samples);
  for (float v : whole.samples) CHECK(std::abs(v) <= 1.0f);
  CHECK(whole_state.current_gain <= std::pow(10.0, 1.5) + 1e-12);
  CHECK(whole_state.current_gain >= std::pow(10.0, -1.5) - 1e-12);

  // Causality: changing chunk 30 leaves chunks < 30 untouched.
  auto y = x;
  for (std::size_t i = 480 * 30; i < 480 * 31; ++i) y[i] = 0.9f;
  agc::AgcState st2;
  auto wy = agc::process(dsp::Waveform(y), st2);
  CHECK(std::equal(wy.samples.begin(), wy.samples.begin() + 480 * 30, whole.samples.begin()));
}
