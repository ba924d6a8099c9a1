#include <doctest.h>

#include <cmath>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <numbers>

#include "support/signals.hpp"
#include "voxmend/dsp/stft.hpp"
#include "voxmend/dsp/wav.hpp"
#include "voxmend/error.hpp"

using namespace voxmend;
using namespace voxmend::dsp;
using namespace testsupport;

namespace {

std::filesystem::path temp_path(const std::string& name) {
  auto dir = std::filesystem::temp_directory_path() / "voxmend_tests";
  std::filesystem::create_directories(dir);
  return dir / name;
}

double interior_rel_error(const std::vector<float>& a, const std::vector<float>& b, std::size_t lo,
                          std::size_t hi) {
  double num = 0, den = 0;
  for (std::size_t i = lo; i < hi; ++i) {
    num += (static_cast<double>(a[i]) - b[i]) * (static_cast<double>(a[i]) - b[i]);
    den += static_cast<double>(b[i]) * b[i];
  }
  return std::sqrt(num / den);
}

}  // namespace

TEST_CASE("window is periodic Hann and COLA at half overlap") {
  auto cfg = StftConfig::standard();
  CHECK(cfg.bins() == 481);
  CHECK(cfg.window[0] == 0.0);
  CHECK(cfg.window[480] == doctest::Approx(1.0));
  CHECK_NOTHROW(cfg.validate());
  auto bad = cfg;
  bad.hop = 400;
  CHECK_THROWS_AS(bad.validate(), ValidationError);
}

TEST_CASE("stft of a 1 kHz sine peaks at bin 20 and matches a direct DFT") {
  auto cfg = StftConfig::standard();
  Waveform w(sine(4800, 1000.0));
  auto spec = stft(w, cfg);
  CHECK(spec.bins == 481);
  for (std::size_t t = 0; t + 2 < spec.frames; ++t) {
    std::size_t best = 0;
    for (std::size_t k = 1; k < spec.bins; ++k) {
      if (std::abs(spec.at(t, k)) > std::abs(spec.at(t, best))) best = k;
    }
    CHECK(best == 20);
  }
  std::vector<double> frame(960);
  for (std::size_t i = 0; i < 960; ++i) frame[i] = cfg.window[i] * w.samples[480 + i];
  for (std::size_t k : {0u, 5u, 19u, 20u, 21u, 300u, 480u}) {
    auto ref = dft_bin(frame, k);
    CHECK(std::abs(std::complex<double>(spec.at(1, k)) - ref) < 1e-4 * (1 + std::abs(ref)));
  }
}

TEST_CASE("stft of silence is silent and istft of zeros is zero") {
  auto cfg = StftConfig::standard();
  auto spec = stft(Waveform(std::vector<float>(3000, 0.0f)), cfg);
  for (auto z : spec.data) CHECK(z == std::complex<float>(0, 0));
  auto back = istft(spec, cfg);
  for (float v : back.samples) CHECK(v == 0.0f);
}

TEST_CASE("short inputs are zero padded to one frame") {
  auto cfg = StftConfig::standard();
  CHECK(frame_count(100, cfg) == 1);
  CHECK(frame_count(960, cfg) == 1);
  CHECK(frame_count(961, cfg) == 2);
  CHECK(frame_count(48000, cfg) == 99);
  auto spec = stft(Waveform(std::vector<float>(100, 0.25f)), cfg);
  CHECK(spec.frames == 1);
}

TEST_CASE("round trip reconstructs interior samples") {
  auto cfg = StftConfig::standard();
  for (std::uint64_t seed = 1; seed <= 5; ++seed) {
    auto x = white_noise(960 * 6 + 123, seed, 1.0f);
    auto y = istft(stft(Waveform(x), cfg), cfg, x.size());
    CHECK(interior_rel_error(y.samples, x, 960, x.size() - 960) < 1e-6);
  }
}

TEST_CASE("istft rejects a wrong bin count") {
  auto cfg = StftConfig::standard();
  ComplexSpectrogram spec(3, 480);
  CHECK_THROWS_AS(istft(spec, cfg), ShapeError);
}

TEST_CASE("single-bin frame synthesises a windowed burst") {
  auto cfg = StftConfig::standard();
  ComplexSpectrogram spec(1, 481);
  spec.at(0, 20) = {480.0f, 0.0f};
  std::vector<double> frame(960);
  synthesize_frame(spec.frame(0), cfg, frame);
  for (std::size_t n = 0; n < 960; n += 37) {
    // inverse DFT of the Hermitian pair at +-20: (2/960) * 480 * cos(2 pi 20 n / 960)
    const double ref = cfg.window[n] * std::cos(2 * std::numbers::pi * 20.0 * n / 960.0);
    CHECK(frame[n] == doctest::Approx(ref).epsilon(1e-6));
  }
}

TEST_CASE("stft is linear, causal and satisfies Parseval per frame") {
  auto cfg = StftConfig::standard();
  auto x = white_noise(4800, 11);
  auto y = white_noise(4800, 12);
  std::vector<float> mix(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) mix[i] = 0.3f * x[i] - 0.7f * y[i];
  auto sx = stft(Waveform(x), cfg), sy = stft(Waveform(y), cfg), sm = stft(Waveform(mix), cfg);
  double num = 0, den = 0;
  for (std::size_t i = 0; i < sm.data.size(); ++i) {
    const auto ref = 0.3 * std::complex<double>(sx.data[i]) - 0.7 * std::complex<double>(sy.data[i]);
    num += std::norm(std::complex<double>(sm.data[i]) - ref);
    den += std::norm(ref);
  }
  CHECK(std::sqrt(num / den) < 1e-6);

  auto x2 = x;
  const std::size_t k = 2000;
  x2[k] += 0.5f;
  auto s2 = stft(Waveform(x2), cfg);
  for (std::size_t t = 0; t < sx.frames; ++t) {
    if (t * cfg.hop + cfg.win_len <= k) {
      for (std::size_t b = 0; b < sx.bins; ++b) CHECK(s2.at(t, b) == sx.at(t, b));
    }
  }

  for (std::size_t t = 0; t < 3; ++t) {
    double e_time = 0;
    for (std::size_t i = 0; i < 960; ++i) {
      const double v = cfg.window[i] * x[t * 480 + i];
      e_time += v * v;
    }
    double e_freq = 0;
    for (std::size_t b = 0; b < 481; ++b) {
      const double w = (b == 0 || b == 480) ? 1.0 : 2.0;
      e_freq += w * std::norm(std::complex<double>(sx.at(t, b)));
    }
    CHECK(e_freq / 960.0 == doctest::Approx(e_time).epsilon(1e-6));
  }
}

TEST_CASE("wav read/write") {
  SUBCASE("float32 round trip is bit exact") {
    auto x = white_noise(12345, 3, 0.9f);
    auto p = temp_path("roundtrip.wav");
    write_wav(p, Waveform(x));
    auto y = read_wav(p);
    CHECK(y.sample_rate == 48000);
    REQUIRE(y.size() == x.size());
    CHECK(std::memcmp(x.data(), y.samples.data(), x.size() * sizeof(float)) == 0);
  }
  SUBCASE("PCM16 scaling") {
    std::vector<float> v(1000, 0.5f);
    auto p = temp_path("half.wav");
    write_wav_pcm16(p, v, 48000, 1);
    auto y = read_wav(p);
    for (float s : y.samples) CHECK(s == 0.5f);
  }
  SUBCASE("stereo channels are averaged") {
    std::vector<float> v;
    for (int i = 0; i < 500; ++i) {
      v.push_back(0.2f);
      v.push_back(-0.2f);
    }
    auto p = temp_path("stereo.wav");
    write_wav_pcm16(p, v, 48000, 2);
    auto y = read_wav(p);
    CHECK(y.size() == 500);
    for (float s : y.samples) CHECK(s == 0.0f);
  }
  SUBCASE("24 kHz input is resampled to 48 kHz") {
    auto x = sine(24000, 440.0, 0.5, 24000.0);
    auto p = temp_path("sr24k.wav");
    write_wav_pcm16(p, x, 24000, 1);
    auto y = read_wav(p);
    REQUIRE(y.size() == 48000);
    std::vector<double> xd(y.samples.begin(), y.samples.end());
    // Peak search over 1 Hz bins between 50 Hz and 2 kHz.
    std::size_t best = 0;
    double best_mag = 0;
    for (std::size_t k = 50; k < 2000; ++k) {
      const double m = std::abs(dft_bin(xd, k));
      if (m > best_mag) {
        best_mag = m;
        best = k;
      }
    }
    CHECK(best == 440);
  }
  SUBCASE("empty and non-finite waveforms are rejected") {
    CHECK_THROWS_AS(write_wav(temp_path("empty.wav"), Waveform()), ValidationError);
    std::vector<float> bad(10, 0.0f);
    bad[3] = std::nanf("");
    CHECK_THROWS_AS(write_wav(temp_path("nan.wav"), Waveform(bad)), ValidationError);
  }
  SUBCASE("malformed and unsupported files") {
    std::vector<std::uint8_t> junk{'R', 'I', 'F', 'X', 0, 0, 0, 0};
    CHECK_THROWS_AS(decode_wav(junk), ParseError);
    auto p = temp_path("alaw.wav");
    write_wav_pcm16(p, std::vector<float>(10, 0.0f), 48000, 1);
    std::ifstream in(p, std::ios::binary);
    std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    bytes[20] = 6;  // A-law format tag
    bytes[21] = 0;
    CHECK_THROWS_AS(decode_wav(bytes), UnsupportedFormatError);
    CHECK_THROWS_AS(read_wav(temp_path("does_not_exist.wav")), IoError);
  }
  SUBCASE("write failure mentions the path") {
    try {
      write_wav("/nonexistent_dir/x.wav", Waveform(std::vector<float>(4, 0.0f)));
      FAIL("expected an error");
    } catch (const IoError& e) {
      CHECK(std::string(e.what()).find("/nonexistent_dir/x.wav") != std::string::npos);
    }
  }
}

TEST_CASE("speech fixture loads") {
  auto w = read_wav(fixture("speech_like_10s.wav"));
  CHECK(w.size() == 480000);
  CHECK_NOTHROW(validate(w));
}
