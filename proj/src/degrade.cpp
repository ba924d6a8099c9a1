#include "voxmend/degrade.hpp"

#include <algorithm>
#include <cmath>
#include <complex>
#include <fstream>
#include <limits>
#include <numbers>
#include <sstream>

#include <json.hpp>
#include <unsupported/Eigen/FFT>

#include "voxmend/error.hpp"
#include "voxmend/filterbank/erb.hpp"

namespace voxmend::sim {

using dsp::Waveform;
using json = nlohmann::json;

namespace {

constexpr double kFs = dsp::kSampleRate;

void require_signal(const Waveform& w, const char* what) {
  if (w.empty()) throw ValidationError(std::string(what) + ": empty waveform");
  if (!dsp::all_finite(w.samples)) throw ValidationError(std::string(what) + ": non-finite samples");
}

double mean_power(std::span<const float> x) {
  double e = 0;
  for (float v : x) e += static_cast<double>(v) * v;
  return x.empty() ? 0.0 : e / static_cast<double>(x.size());
}

double peak(std::span<const float> x) {
  double p = 0;
  for (float v : x) p = std::max(p, static_cast<double>(std::abs(v)));
  return p;
}

Waveform trimmed(Waveform w, std::size_t n) {
  w.samples.resize(n, 0.0f);
  return w;
}

Waveform scaled(const Waveform& w, double k) {
  Waveform out = w;
  for (auto& v : out.samples) v = static_cast<float>(v * k);
  return out;
}

}  // namespace

void RoomSpec::validate() const {
  for (std::size_t i = 0; i < 3; ++i) {
    if (!(dims[i] > 0)) throw ValidationError("RoomSpec: room dimensions must be positive");
    if (!(source[i] > 0 && source[i] < dims[i]) || !(mic[i] > 0 && mic[i] < dims[i])) {
      throw ValidationError("RoomSpec: source and microphone must lie strictly inside the room");
    }
  }
  for (double b : beta) {
    if (!(b >= 0 && b < 1)) throw ValidationError("RoomSpec: reflection coefficients must be in [0, 1)");
  }
  if (max_order < 0) throw ValidationError("RoomSpec: max_order must be >= 0");
  if (!(speed_of_sound > 0)) throw ValidationError("RoomSpec: speed of sound must be positive");
  if (direct_distance() < 1e-3) throw ValidationError("RoomSpec: source and microphone coincide");
}

double RoomSpec::direct_distance() const {
  double d2 = 0;
  for (std::size_t i = 0; i < 3; ++i) d2 += (source[i] - mic[i]) * (source[i] - mic[i]);
  return std::sqrt(d2);
}

Waveform simulate_rir(const RoomSpec& room) {
  room.validate();
  const int n = room.max_order;
  // Per axis: every image coordinate with its reflection count and gain.
  struct AxisImage {
    double offset;  // image coordinate minus mic coordinate
    int hits;
    double gain;
  };
  std::array<std::vector<AxisImage>, 3> axes;
  for (std::size_t a = 0; a < 3; ++a) {
    const double len = room.dims[a], s = room.source[a];
    const double b0 = room.beta[2 * a], b1 = room.beta[2 * a + 1];
    for (int p = 0; p <= 1; ++p)
      for (int m = -n; m <= n; ++m) {
        const int h0 = std::abs(m - p), h1 = std::abs(m);
        if (h0 + h1 > n) continue;
        const double coord = (1 - 2 * p) * s + 2 * m * len;
        axes[a].push_back({coord - room.mic[a], h0 + h1, std::pow(b0, h0) * std::pow(b1, h1)});
      }
  }
  struct Tap {
    double delay, amp;
  };
  std::vector<Tap> taps;
  double max_delay = 0;
  for (const auto& x : axes[0])
    for (const auto& y : axes[1]) {
      if (x.hits + y.hits > n) continue;
      for (const auto& z : axes[2]) {
        if (x.hits + y.hits + z.hits > n) continue;
        const double gain = x.gain * y.gain * z.gain;
        if (gain == 0.0) continue;
        const double d = std::sqrt(x.offset * x.offset + y.offset * y.offset + z.offset * z.offset);
        const double delay = d / room.speed_of_sound * kFs;
        taps.push_back({delay, gain / (4 * std::numbers::pi * d)});
        max_delay = std::max(max_delay, delay);
      }
    }
  std::vector<double> h(static_cast<std::size_t>(std::floor(max_delay)) + 2, 0.0);
  for (const auto& t : taps) {
    const auto i = static_cast<std::size_t>(std::floor(t.delay));
    const double frac = t.delay - static_cast<double>(i);
    h[i] += (1 - frac) * t.amp;
    h[i + 1] += frac * t.amp;
  }
  return Waveform(std::vector<float>(h.begin(), h.end()));
}

double eyring_t60(const RoomSpec& room) {
  room.validate();
  const double lx = room.dims[0], ly = room.dims[1], lz = room.dims[2];
  const std::array<double, 6> area{ly * lz, ly * lz, lx * lz, lx * lz, lx * ly, lx * ly};
  double s = 0, absorbed = 0;
  for (std::size_t i = 0; i < 6; ++i) {
    s += area[i];
    absorbed += area[i] * (1 - room.beta[i] * room.beta[i]);
  }
  const double abar = absorbed / s;
  if (abar <= 0) return std::numeric_limits<double>::infinity();
  return 24 * std::numbers::ln10 * lx * ly * lz / (room.speed_of_sound * -s * std::log(1 - abar));
}

std::vector<double> energy_decay_db(const Waveform& rir, std::size_t from) {
  if (from >= rir.size()) throw ValidationError("energy_decay_db: start beyond the response");
  std::vector<double> tail(rir.size() - from);
  double acc = 0;
  for (std::size_t i = rir.size(); i-- > from;) {
    acc += static_cast<double>(rir.samples[i]) * rir.samples[i];
    tail[i - from] = acc;
  }
  if (tail[0] <= 0) throw ValidationError("energy_decay_db: silent response");
  for (auto& v : tail) v = 10 * std::log10(std::max(v, 1e-300) / acc);
  return tail;
}

Waveform apply_reverb(const Waveform& wave, const Waveform& rir) {
  require_signal(wave, "apply_reverb");
  require_signal(rir, "apply_reverb (rir)");
  const std::size_t out_len = wave.size() + rir.size() - 1;
  std::size_t n = 1;
  while (n < out_len) n <<= 1;
  std::vector<double> a(n, 0.0), b(n, 0.0), y(n);
  std::copy(wave.samples.begin(), wave.samples.end(), a.begin());
  std::copy(rir.samples.begin(), rir.samples.end(), b.begin());
  Eigen::FFT<double> fft;
  std::vector<std::complex<double>> fa, fb;
  fft.fwd(fa, a);
  fft.fwd(fb, b);
  for (std::size_t i = 0; i < fa.size(); ++i) fa[i] *= fb[i];
  fft.inv(y, fa);
  return Waveform(std::vector<float>(y.begin(), y.begin() + static_cast<std::ptrdiff_t>(out_len)));
}

Waveform scaled_noise(const Waveform& clean, const Waveform& noise, double snr_db) {
  require_signal(clean, "mix_at_snr (clean)");
  require_signal(noise, "mix_at_snr (noise)");
  Waveform n(std::vector<float>(clean.size()));
  for (std::size_t i = 0; i < clean.size(); ++i) n.samples[i] = noise.samples[i % noise.size()];
  if (std::isinf(snr_db) && snr_db > 0) {
    std::fill(n.samples.begin(), n.samples.end(), 0.0f);
    return n;
  }
  if (std::isnan(snr_db)) throw ValidationError("mix_at_snr: SNR is NaN");
  const double pc = mean_power(clean.samples), pn = mean_power(n.samples);
  if (pc == 0 || pn == 0) throw ValidationError("mix_at_snr: clean and noise must both be non-silent");
  const double k = std::sqrt(pc / (pn * std::pow(10.0, snr_db / 10)));
  for (auto& v : n.samples) v = static_cast<float>(v * k);
  return n;
}

Waveform mix_at_snr(const Waveform& clean, const Waveform& noise, double snr_db) {
  auto n = scaled_noise(clean, noise, snr_db);
  Waveform out = clean;
  for (std::size_t i = 0; i < out.size(); ++i) out.samples[i] += n.samples[i];
  return out;
}

namespace {

// Kaiser design for 60 dB: beta from the attenuation, transition width from the length.
constexpr double kStopbandDb = 60.0;
double kaiser_beta() { return 0.1102 * (kStopbandDb - 8.7); }
double transition_hz() { return (kStopbandDb - 7.95) * kFs / (2 * std::numbers::pi * 2.285 * (kLowpassTaps - 1)); }

}  // namespace

std::vector<double> lowpass_taps(double cutoff_hz) {
  if (!(cutoff_hz > 0)) throw ValidationError("lowpass: cutoff must be positive");
  if (cutoff_hz >= kFs / 2) return {1.0};
  // The sinc edge sits half a transition below 1.1 x cutoff so the full
  // stopband attenuation is reached there.
  const double edge = std::max(1.1 * cutoff_hz - transition_hz() / 2, 0.5 * cutoff_hz);
  const double wc = 2 * edge / kFs;  // fraction of the sampling rate times 2
  const double beta = kaiser_beta();
  const double i0b = std::cyl_bessel_i(0.0, beta);
  const int mid = static_cast<int>(kLowpassTaps / 2);
  std::vector<double> h(kLowpassTaps);
  double sum = 0;
  for (int i = 0; i < static_cast<int>(kLowpassTaps); ++i) {
    const double m = i - mid;
    const double sinc = m == 0 ? wc : std::sin(std::numbers::pi * wc * m) / (std::numbers::pi * m);
    const double r = m / mid;
    h[static_cast<std::size_t>(i)] = sinc * std::cyl_bessel_i(0.0, beta * std::sqrt(1 - r * r)) / i0b;
    sum += h[static_cast<std::size_t>(i)];
  }
  for (auto& v : h) v /= sum;
  return h;
}

Waveform lowpass(const Waveform& wave, double cutoff_hz) {
  require_signal(wave, "lowpass");
  const auto h = lowpass_taps(cutoff_hz);
  if (h.size() == 1) return wave;
  const std::ptrdiff_t mid = static_cast<std::ptrdiff_t>(h.size() / 2), len = static_cast<std::ptrdiff_t>(wave.size());
  Waveform out(std::vector<float>(wave.size()));
  for (std::ptrdiff_t n = 0; n < len; ++n) {
    double acc = 0;
    const std::ptrdiff_t k0 = std::max<std::ptrdiff_t>(0, n + mid - len + 1), k1 = std::min<std::ptrdiff_t>(2 * mid, n + mid);
    for (std::ptrdiff_t k = k0; k <= k1; ++k) acc += h[static_cast<std::size_t>(k)] * wave.samples[static_cast<std::size_t>(n + mid - k)];
    out.samples[static_cast<std::size_t>(n)] = static_cast<float>(acc);
  }
  return out;
}

Waveform clip(const Waveform& wave, double level) {
  if (!(level > 0)) throw ValidationError("clip: level must be positive");
  Waveform out = wave;
  const float l = static_cast<float>(level);
  for (auto& v : out.samples) v = std::clamp(v, -l, l);
  return out;
}

Waveform halfwave_rectify(const Waveform& wave) {
  Waveform out = wave;
  for (auto& v : out.samples) v = std::max(v, 0.0f);
  return out;
}

Waveform nonlinear_distort(const Waveform& wave, double drive) {
  if (!(drive > 0)) throw ValidationError("nonlinear_distort: drive must be > 0");
  Waveform out = wave;
  const double norm = std::tanh(drive);
  for (auto& v : out.samples) v = static_cast<float>(std::tanh(drive * v) / norm);
  return out;
}

std::vector<bool> gilbert_losses(std::size_t frames, double rate, double burst_mean, std::mt19937_64& rng) {
  if (!(rate >= 0 && rate <= 1)) throw ValidationError("packet_loss: rate must be in [0, 1]");
  if (!(burst_mean >= 1)) throw ValidationError("packet_loss: mean burst length must be >= 1 frame");
  if (rate == 0) return std::vector<bool>(frames, false);
  if (rate == 1) return std::vector<bool>(frames, true);
  const double q = 1 / burst_mean;      // lost -> received
  const double p = rate * q / (1 - rate);  // received -> lost
  if (p > 1) throw ValidationError("packet_loss: rate too high for the requested burst length");
  std::uniform_real_distribution<double> u(0, 1);
  std::vector<bool> lost(frames);
  bool state = u(rng) < rate;
  for (std::size_t i = 0; i < frames; ++i) {
    lost[i] = state;
    state = state ? !(u(rng) < q) : u(rng) < p;
  }
  return lost;
}

Waveform apply_losses(const Waveform& wave, const std::vector<bool>& lost) {
  const std::size_t len = wave.size();
  const std::size_t frames = (len + kPacketFrame - 1) / kPacketFrame;
  if (lost.size() < frames) throw ValidationError("packet_loss: loss pattern shorter than the signal");
  std::vector<double> g(len, 1.0);
  std::size_t f = 0;
  while (f < frames) {
    if (!lost[f]) {
      ++f;
      continue;
    }
    const std::size_t f0 = f;
    while (f < frames && lost[f]) ++f;
    const std::size_t a = f0 * kPacketFrame, b = std::min(f * kPacketFrame, len);
    for (std::size_t n = a; n < b; ++n) g[n] = 0.0;
    const double r = static_cast<double>(kPacketRamp + 1);
    if (a > 0) {
      for (std::size_t k = 0; k < kPacketRamp && a + k < b; ++k)
        g[a + k] = 0.5 * (1 + std::cos(std::numbers::pi * static_cast<double>(k + 1) / r));
    }
    if (b < len) {
      for (std::size_t k = 0; k < kPacketRamp && b >= k + 1 && b - k - 1 >= a; ++k)
        g[b - k - 1] = std::max(g[b - k - 1], 0.5 * (1 + std::cos(std::numbers::pi * static_cast<double>(k + 1) / r)));
    }
  }
  Waveform out = wave;
  for (std::size_t n = 0; n < len; ++n) out.samples[n] = static_cast<float>(out.samples[n] * g[n]);
  return out;
}

Waveform packet_loss(const Waveform& wave, double rate, double burst_mean, std::mt19937_64& rng) {
  const std::size_t frames = (wave.size() + kPacketFrame - 1) / kPacketFrame;
  return apply_losses(wave, gilbert_losses(frames, rate, burst_mean, rng));
}

CodecLevel parse_codec_level(const std::string& s) {
  if (s == "none") return CodecLevel::None;
  if (s == "low") return CodecLevel::Low;
  if (s == "med") return CodecLevel::Med;
  if (s == "high") return CodecLevel::High;
  throw ValidationError("codec level must be none, low, med or high, got '" + s + "'");
}

std::string to_string(CodecLevel level) {
  switch (level) {
    case CodecLevel::None: return "none";
    case CodecLevel::Low: return "low";
    case CodecLevel::Med: return "med";
    case CodecLevel::High: return "high";
  }
  return "none";
}

double codec_step_db(CodecLevel level) {
  switch (level) {
    case CodecLevel::Low: return 3.0;
    case CodecLevel::Med: return 1.5;
    case CodecLevel::High: return 0.75;
    default: return 0.0;
  }
}

double codec_cutoff_hz(CodecLevel level) {
  switch (level) {
    case CodecLevel::Low: return 12000.0;
    case CodecLevel::Med: return 16000.0;
    case CodecLevel::High: return 20000.0;
    default: return kFs / 2;
  }
}

void quantize_spectrum(dsp::ComplexSpectrogram& spec, CodecLevel level) {
  if (level == CodecLevel::None) return;
  const auto& bank = fb::default_erb_bank();
  if (spec.bins != bank.n_bins()) throw ShapeError("codec_surrogate: expected 481-bin spectra");
  const double step = codec_step_db(level);
  const auto cut_bin = static_cast<std::size_t>(codec_cutoff_hz(level) * static_cast<double>(spec.bins - 1) / (kFs / 2));
  std::vector<std::size_t> owner(spec.bins);
  for (std::size_t k = 0; k < spec.bins; ++k) owner[k] = bank.dominant_band(k);
  std::vector<double> power(bank.n_bands());
  std::vector<std::size_t> count(bank.n_bands());
  for (std::size_t t = 0; t < spec.frames; ++t) {
    auto fr = spec.frame(t);
    std::fill(power.begin(), power.end(), 0.0);
    std::fill(count.begin(), count.end(), 0);
    for (std::size_t k = 0; k < spec.bins; ++k) {
      if (k >= cut_bin) {
        fr[k] = 0.0f;
        continue;
      }
      power[owner[k]] += std::norm(std::complex<double>(fr[k]));
      ++count[owner[k]];
    }
    for (std::size_t k = 0; k < cut_bin && k < spec.bins; ++k) {
      const std::size_t b = owner[k];
      if (power[b] <= 0) continue;
      const double level_db = 10 * std::log10(power[b] / static_cast<double>(count[b]));
      const double q = step * std::round(level_db / step);
      fr[k] *= static_cast<float>(std::pow(10.0, (q - level_db) / 20));
    }
  }
}

Waveform codec_surrogate(const Waveform& wave, CodecLevel level) {
  if (level == CodecLevel::None) return wave;
  require_signal(wave, "codec_surrogate");
  const auto cfg = dsp::StftConfig::standard();
  auto spec = dsp::stft(wave, cfg);
  quantize_spectrum(spec, level);
  return dsp::istft(spec, cfg, wave.size());
}

void DegradationRecipe::validate() const {
  auto in = [](double v, double lo, double hi) { return v >= lo && v <= hi; };
  if (snr_db && !(in(*snr_db, -5, 25) || (std::isinf(*snr_db) && *snr_db > 0))) {
    throw ValidationError("recipe: snr_db must be in [-5, 25]");
  }
  if (rir) rir->validate();
  if (cutoff_hz && !in(*cutoff_hz, 1000, 24000)) throw ValidationError("recipe: cutoff_hz must be in [1000, 24000]");
  if (clip_level && !in(*clip_level, 0.1, 1.0)) throw ValidationError("recipe: clip_level must be in [0.1, 1.0]");
  if (drive && !(*drive > 0 && *drive <= 20)) throw ValidationError("recipe: drive must be in (0, 20]");
  if (!in(packet_loss_rate, 0, 0.3)) throw ValidationError("recipe: packet_loss_rate must be in [0, 0.3]");
  if (!(burst_mean_frames >= 1)) throw ValidationError("recipe: burst_mean_frames must be >= 1");
}

namespace {

json room_json(const RoomSpec& r) {
  return json{{"dims", r.dims},     {"source", r.source},       {"mic", r.mic},
              {"beta", r.beta},     {"max_order", r.max_order}, {"speed_of_sound", r.speed_of_sound}};
}

template <std::size_t N>
std::array<double, N> read_array(const json& j, const char* key) {
  std::array<double, N> out{};
  const auto& v = j.at(key);
  if (v.is_number()) {
    out.fill(v.get<double>());
    return out;
  }
  if (!v.is_array() || v.size() != N) {
    throw ParseError(std::string("recipe: '") + key + "' must be a number or an array of " + std::to_string(N));
  }
  for (std::size_t i = 0; i < N; ++i) out[i] = v[i].get<double>();
  return out;
}

RoomSpec room_from(const json& j) {
  static const std::vector<std::string> known{"dims", "source", "mic", "beta", "max_order", "speed_of_sound"};
  for (const auto& [k, v] : j.items()) {
    if (std::find(known.begin(), known.end(), k) == known.end()) throw ParseError("recipe: unknown rir field '" + k + "'");
  }
  RoomSpec r;
  if (j.contains("dims")) r.dims = read_array<3>(j, "dims");
  if (j.contains("source")) r.source = read_array<3>(j, "source");
  if (j.contains("mic")) r.mic = read_array<3>(j, "mic");
  if (j.contains("beta")) r.beta = read_array<6>(j, "beta");
  if (j.contains("max_order")) r.max_order = j.at("max_order").get<int>();
  if (j.contains("speed_of_sound")) r.speed_of_sound = j.at("speed_of_sound").get<double>();
  return r;
}

template <typename T>
json opt(const std::optional<T>& v) {
  return v ? json(*v) : json(nullptr);
}

std::optional<double> opt_number(const json& j, const char* key) {
  if (!j.contains(key) || j.at(key).is_null()) return std::nullopt;
  const auto& v = j.at(key);
  if (v.is_string() && v.get<std::string>() == "inf") return std::numeric_limits<double>::infinity();
  return v.get<double>();
}

json recipe_json(const DegradationRecipe& r) {
  json snr = nullptr;
  if (r.snr_db) snr = std::isinf(*r.snr_db) ? json("inf") : json(*r.snr_db);
  return json{{"seed", r.seed},
              {"snr_db", snr},
              {"rir", r.rir ? room_json(*r.rir) : json(nullptr)},
              {"cutoff_hz", opt(r.cutoff_hz)},
              {"clip_level", opt(r.clip_level)},
              {"halfwave", r.halfwave},
              {"drive", opt(r.drive)},
              {"packet_loss_rate", r.packet_loss_rate},
              {"burst_mean_frames", r.burst_mean_frames},
              {"codec_level", to_string(r.codec)}};
}

DegradationRecipe recipe_from(const json& j) {
  if (!j.is_object()) throw ParseError("recipe: expected a JSON object");
  static const std::vector<std::string> known{"seed",  "snr_db",           "rir",
                                              "cutoff_hz", "clip_level", "halfwave",
                                              "drive", "packet_loss_rate", "burst_mean_frames",
                                              "codec_level"};
  for (const auto& [k, v] : j.items()) {
    if (std::find(known.begin(), known.end(), k) == known.end()) throw ParseError("recipe: unknown field '" + k + "'");
  }
  DegradationRecipe r;
  try {
    if (j.contains("seed")) r.seed = j.at("seed").get<std::uint64_t>();
    r.snr_db = opt_number(j, "snr_db");
    if (j.contains("rir") && !j.at("rir").is_null()) r.rir = room_from(j.at("rir"));
    r.cutoff_hz = opt_number(j, "cutoff_hz");
    r.clip_level = opt_number(j, "clip_level");
    if (j.contains("halfwave")) r.halfwave = j.at("halfwave").get<bool>();
    r.drive = opt_number(j, "drive");
    if (j.contains("packet_loss_rate")) r.packet_loss_rate = j.at("packet_loss_rate").get<double>();
    if (j.contains("burst_mean_frames")) r.burst_mean_frames = j.at("burst_mean_frames").get<double>();
    if (j.contains("codec_level")) r.codec = parse_codec_level(j.at("codec_level").get<std::string>());
  } catch (const json::exception& e) {
    throw ParseError(std::string("recipe: ") + e.what());
  }
  r.validate();
  return r;
}

}  // namespace

std::string recipe_to_json(const DegradationRecipe& r) { return recipe_json(r).dump(); }

DegradationRecipe recipe_from_json(const std::string& text) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::parse_error& e) {
    throw ParseError(std::string("recipe: ") + e.what());
  }
  return recipe_from(j);
}

DegradationRecipe sample_recipe(std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  auto uni = [&rng](double lo, double hi) { return std::uniform_real_distribution<double>(lo, hi)(rng); };
  DegradationRecipe r;
  r.seed = seed;
  // Classes: noise, reverb, lowpass, clipping, halfwave, distortion, packet loss, codec.
  constexpr int kClasses = 8;
  std::array<int, kClasses> order{};
  for (int i = 0; i < kClasses; ++i) order[static_cast<std::size_t>(i)] = i;
  std::shuffle(order.begin(), order.end(), rng);
  const int picks = std::uniform_int_distribution<int>(1, 3)(rng);
  for (int i = 0; i < picks; ++i) {
    switch (order[static_cast<std::size_t>(i)]) {
      case 0: r.snr_db = uni(-5, 25); break;
      case 1: {
        RoomSpec room;
        room.dims = {uni(3, 10), uni(3, 8), uni(2.5, 4)};
        for (std::size_t a = 0; a < 3; ++a) {
          room.source[a] = uni(0.5, room.dims[a] - 0.5);
          room.mic[a] = uni(0.5, room.dims[a] - 0.5);
        }
        room.beta.fill(uni(0.6, 0.95));
        room.max_order = 12;
        r.rir = room;
        break;
      }
      case 2: r.cutoff_hz = uni(1000, 24000); break;
      case 3: r.clip_level = uni(0.1, 1.0); break;
      case 4: r.halfwave = true; break;
      case 5: r.drive = uni(0.5, 10); break;
      case 6:
        r.packet_loss_rate = uni(0.01, 0.3);
        r.burst_mean_frames = uni(1, 4);
        break;
      default: r.codec = static_cast<CodecLevel>(std::uniform_int_distribution<int>(1, 3)(rng)); break;
    }
  }
  r.validate();
  return r;
}

Waveform early_rir(const Waveform& rir) {
  require_signal(rir, "early_rir");
  const double p = peak(rir.samples);
  if (p == 0) throw ValidationError("early_rir: silent response");
  std::size_t onset = 0;
  while (std::abs(rir.samples[onset]) < 0.01 * p) ++onset;
  const auto keep = std::min(rir.size(), onset + static_cast<std::size_t>(kEarlyReflectionSeconds * kFs));
  return trimmed(rir, keep);
}

SimulatedPair simulate_pair(const Waveform& clean, const Waveform& noise, const DegradationRecipe& recipe) {
  recipe.validate();
  require_signal(clean, "simulate_pair (clean)");
  if (clean.size() < kPacketFrame) throw ValidationError("simulate_pair: clean shorter than one 20 ms frame");
  if (recipe.snr_db && noise.size() < kPacketFrame) {
    throw ValidationError("simulate_pair: noise shorter than one 20 ms frame");
  }
  std::mt19937_64 rng(recipe.seed);
  const std::size_t len = clean.size();
  std::optional<Waveform> rir;
  if (recipe.rir) rir = simulate_rir(*recipe.rir);

  Waveform target = rir ? trimmed(apply_reverb(clean, early_rir(*rir)), len) : clean;
  const double tp = peak(target.samples);
  if (tp == 0) throw ValidationError("simulate_pair: clean signal is silent");
  const double gain = std::pow(10.0, kTargetPeakDb / 20) / tp;
  target = scaled(target, gain);

  Waveform x = scaled(clean, gain);
  if (recipe.drive) x = nonlinear_distort(x, *recipe.drive);
  if (rir) x = trimmed(apply_reverb(x, *rir), len);
  if (recipe.snr_db) x = mix_at_snr(x, noise, *recipe.snr_db);
  if (recipe.cutoff_hz) x = lowpass(x, *recipe.cutoff_hz);
  if (recipe.clip_level) x = clip(x, *recipe.clip_level);
  if (recipe.halfwave) x = halfwave_rectify(x);
  // Noise suppression and bandwidth extension stages are identity here.
  x = codec_surrogate(x, recipe.codec);
  if (recipe.packet_loss_rate > 0) x = packet_loss(x, recipe.packet_loss_rate, recipe.burst_mean_frames, rng);

  const double dp = peak(x.samples);
  if (dp > 1.0) {
    x = scaled(x, 1.0 / dp);
    target = scaled(target, 1.0 / dp);
  }
  return {x, target};
}

std::vector<ManifestEntry> parse_manifest(const std::string& text) {
  std::vector<ManifestEntry> out;
  std::istringstream in(text);
  std::string line;
  std::size_t no = 0;
  while (std::getline(in, line)) {
    ++no;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    try {
      const json j = json::parse(line);
      if (!j.is_object() || !j.contains("clean_path") || !j.contains("recipe")) {
        throw ParseError("expected an object with clean_path and recipe");
      }
      ManifestEntry e;
      e.clean_path = j.at("clean_path").get<std::string>();
      if (j.contains("noise_path") && !j.at("noise_path").is_null()) e.noise_path = j.at("noise_path").get<std::string>();
      e.recipe = recipe_from(j.at("recipe"));
      if (e.recipe.snr_db && e.noise_path.empty()) throw ValidationError("recipe mixes noise but noise_path is empty");
      out.push_back(std::move(e));
    } catch (const json::exception& ex) {
      throw ParseError("manifest line " + std::to_string(no) + ": " + ex.what());
    } catch (const Error& ex) {
      throw ParseError("manifest line " + std::to_string(no) + ": " + ex.what());
    }
  }
  return out;
}

std::vector<ManifestEntry> read_manifest(const std::filesystem::path& path) {
  std::ifstream f(path);
  if (!f) throw IoError("cannot open manifest " + path.string());
  std::stringstream ss;
  ss << f.rdbuf();
  return parse_manifest(ss.str());
}

std::string manifest_line(const ManifestEntry& e) {
  return json{{"clean_path", e.clean_path.string()}, {"noise_path", e.noise_path.string()}, {"recipe", recipe_json(e.recipe)}}
      .dump();
}

}  // namespace voxmend::sim
