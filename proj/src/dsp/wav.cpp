#include "voxmend/dsp/wav.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <iterator>
#include <numbers>
#include <string>

#include "voxmend/error.hpp"

namespace voxmend::dsp {
namespace {

constexpr std::uint16_t kFormatPcm = 1;
constexpr std::uint16_t kFormatFloat = 3;
constexpr std::uint16_t kFormatExtensible = 0xFFFE;

std::uint16_t le16(const std::uint8_t* p) {
  return static_cast<std::uint16_t>(p[0] | (p[1] << 8));
}
std::uint32_t le32(const std::uint8_t* p) {
  return static_cast<std::uint32_t>(p[0]) | (static_cast<std::uint32_t>(p[1]) << 8) |
         (static_cast<std::uint32_t>(p[2]) << 16) | (static_cast<std::uint32_t>(p[3]) << 24);
}

void put16(std::vector<std::uint8_t>& out, std::uint16_t v) {
  out.push_back(static_cast<std::uint8_t>(v & 0xFF));
  out.push_back(static_cast<std::uint8_t>(v >> 8));
}
void put32(std::vector<std::uint8_t>& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<std::uint8_t>((v >> (8 * i)) & 0xFF));
}
void put_tag(std::vector<std::uint8_t>& out, const char* tag) { out.insert(out.end(), tag, tag + 4); }

std::vector<std::uint8_t> header(std::uint16_t format, int channels, int rate, int bits,
                                 std::size_t data_bytes) {
  std::vector<std::uint8_t> h;
  h.reserve(44);
  put_tag(h, "RIFF");
  put32(h, static_cast<std::uint32_t>(36 + data_bytes));
  put_tag(h, "WAVE");
  put_tag(h, "fmt ");
  put32(h, 16);
  put16(h, format);
  put16(h, static_cast<std::uint16_t>(channels));
  put32(h, static_cast<std::uint32_t>(rate));
  const int block = channels * bits / 8;
  put32(h, static_cast<std::uint32_t>(rate * block));
  put16(h, static_cast<std::uint16_t>(block));
  put16(h, static_cast<std::uint16_t>(bits));
  put_tag(h, "data");
  put32(h, static_cast<std::uint32_t>(data_bytes));
  return h;
}

void write_bytes(const std::filesystem::path& path, const std::vector<std::uint8_t>& bytes) {
  std::ofstream os(path, std::ios::binary | std::ios::trunc);
  if (!os) throw IoError("cannot open '" + path.string() + "' for writing");
  os.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!os) throw IoError("write failed for '" + path.string() + "'");
}

}  // namespace

WavData decode_wav(std::span<const std::uint8_t> bytes) {
  if (bytes.size() < 12 || std::memcmp(bytes.data(), "RIFF", 4) != 0 ||
      std::memcmp(bytes.data() + 8, "WAVE", 4) != 0) {
    throw ParseError("not a RIFF/WAVE file");
  }
  std::size_t pos = 12;
  bool have_fmt = false;
  std::uint16_t format = 0, channels = 0, bits = 0;
  std::uint32_t rate = 0;
  const std::uint8_t* data = nullptr;
  std::size_t data_size = 0;
  while (pos + 8 <= bytes.size()) {
    const std::uint8_t* chunk = bytes.data() + pos;
    const std::uint32_t size = le32(chunk + 4);
    const std::uint8_t* body = chunk + 8;
    const std::size_t avail = bytes.size() - pos - 8;
    if (std::memcmp(chunk, "fmt ", 4) == 0) {
      if (size < 16 || size > avail) throw ParseError("truncated fmt chunk");
      format = le16(body);
      channels = le16(body + 2);
      rate = le32(body + 4);
      bits = le16(body + 14);
      if (format == kFormatExtensible) {
        if (size < 40) throw ParseError("truncated WAVE_FORMAT_EXTENSIBLE header");
        format = le16(body + 24);
      }
      have_fmt = true;
    } else if (std::memcmp(chunk, "data", 4) == 0) {
      data = body;
      // Writers that stream sometimes leave the size at 0 or 0xFFFFFFFF.
      data_size = (size == 0 || size > avail) ? avail : size;
    }
    pos += 8 + static_cast<std::size_t>(size) + (size & 1u);
    if (data != nullptr && have_fmt) break;
  }
  if (!have_fmt) throw ParseError("missing fmt chunk");
  if (data == nullptr) throw ParseError("missing data chunk");
  if (channels == 0 || rate == 0) throw ParseError("invalid channel count or sample rate");

  WavData out;
  out.sample_rate = static_cast<int>(rate);
  out.channels = channels;
  if (format == kFormatPcm && bits == 16) {
    const std::size_t n = data_size / 2;
    out.interleaved.resize(n);
    for (std::size_t i = 0; i < n; ++i) {
      const auto v = static_cast<std::int16_t>(le16(data + 2 * i));
      out.interleaved[i] = static_cast<float>(v) / 32768.0f;
    }
  } else if (format == kFormatFloat && bits == 32) {
    const std::size_t n = data_size / 4;
    out.interleaved.resize(n);
    for (std::size_t i = 0; i < n; ++i) {
      out.interleaved[i] = std::bit_cast<float>(le32(data + 4 * i));
    }
  } else {
    throw UnsupportedFormatError("unsupported WAV encoding: format tag " + std::to_string(format) +
                                 ", " + std::to_string(bits) + " bits");
  }
  out.interleaved.resize(out.interleaved.size() - out.interleaved.size() % channels);
  return out;
}

Waveform read_wav(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw IoError("cannot open '" + path.string() + "'");
  std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(is)), std::istreambuf_iterator<char>());
  WavData raw;
  try {
    raw = decode_wav(bytes);
  } catch (const ParseError& e) {
    throw ParseError(path.string() + ": " + e.what());
  } catch (const UnsupportedFormatError& e) {
    throw UnsupportedFormatError(path.string() + ": " + e.what());
  }
  const std::size_t frames = raw.interleaved.size() / raw.channels;
  std::vector<float> mono(frames);
  for (std::size_t i = 0; i < frames; ++i) {
    double acc = 0.0;
    for (int c = 0; c < raw.channels; ++c) acc += raw.interleaved[i * raw.channels + c];
    mono[i] = static_cast<float>(acc / raw.channels);
  }
  if (raw.sample_rate != kSampleRate) mono = resample(mono, raw.sample_rate, kSampleRate);
  for (float& v : mono) v = std::clamp(v, -1.0f, 1.0f);
  Waveform wave(std::move(mono));
  if (wave.empty()) throw ParseError(path.string() + ": no samples");
  if (!all_finite(wave.samples)) throw ParseError(path.string() + ": non-finite samples");
  return wave;
}

void write_wav(const std::filesystem::path& path, const Waveform& wave) {
  try {
    validate(wave);
  } catch (const ValidationError& e) {
    throw ValidationError("refusing to write '" + path.string() + "': " + e.what());
  }
  auto bytes = header(kFormatFloat, 1, kSampleRate, 32, wave.size() * 4);
  bytes.reserve(bytes.size() + wave.size() * 4);
  for (float v : wave.samples) put32(bytes, std::bit_cast<std::uint32_t>(v));
  write_bytes(path, bytes);
}

void write_wav_pcm16(const std::filesystem::path& path, std::span<const float> interleaved,
                     int sample_rate, int channels) {
  auto bytes = header(kFormatPcm, channels, sample_rate, 16, interleaved.size() * 2);
  for (float v : interleaved) {
    const long q = std::lround(std::clamp(v, -1.0f, 1.0f) * 32768.0f);
    put16(bytes, static_cast<std::uint16_t>(static_cast<std::int16_t>(std::clamp(q, -32768L, 32767L))));
  }
  write_bytes(path, bytes);
}

std::vector<float> resample(std::span<const float> in, int in_rate, int out_rate) {
  if (in_rate <= 0 || out_rate <= 0) throw ValidationError("resample: rates must be positive");
  if (in_rate == out_rate) return {in.begin(), in.end()};
  constexpr int kHalfTaps = 32;
  constexpr double kBeta = 8.6;
  const double ratio = static_cast<double>(out_rate) / in_rate;
  const double cutoff = std::min(1.0, ratio) * 0.97;
  const auto n_out = static_cast<std::size_t>(
      (static_cast<std::uint64_t>(in.size()) * out_rate + in_rate / 2) / in_rate);
  const double i0_beta = std::cyl_bessel_i(0.0, kBeta);
  std::vector<float> out(n_out);
  const auto n_in = static_cast<std::ptrdiff_t>(in.size());
  for (std::size_t n = 0; n < n_out; ++n) {
    const double pos = static_cast<double>(n) / ratio;
    const auto base = static_cast<std::ptrdiff_t>(std::floor(pos));
    double acc = 0.0, wsum = 0.0;
    for (std::ptrdiff_t k = base - kHalfTaps + 1; k <= base + kHalfTaps; ++k) {
      const double d = pos - static_cast<double>(k);
      const double r = d / kHalfTaps;
      if (std::abs(r) >= 1.0) continue;
      const double arg = std::numbers::pi * cutoff * d;
      const double sinc = std::abs(arg) < 1e-12 ? 1.0 : std::sin(arg) / arg;
      const double h = cutoff * sinc * std::cyl_bessel_i(0.0, kBeta * std::sqrt(1.0 - r * r)) / i0_beta;
      wsum += h;
      if (k >= 0 && k < n_in) acc += h * in[static_cast<std::size_t>(k)];
    }
    out[n] = static_cast<float>(wsum != 0.0 ? acc / wsum : 0.0);
  }
  return out;
}

void validate(const Waveform& wave) {
  if (wave.empty()) throw ValidationError("waveform is empty");
  if (wave.sample_rate != kSampleRate) {
    throw ValidationError("waveform sample rate " + std::to_string(wave.sample_rate) + " != 48000");
  }
  if (!all_finite(wave.samples)) throw ValidationError("waveform contains non-finite samples");
}

bool all_finite(std::span<const float> x) {
  return std::all_of(x.begin(), x.end(), [](float v) { return std::isfinite(v); });
}

}  // namespace voxmend::dsp
