#include "voxmend/pipeline.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <fstream>
#include <random>
#include <sstream>

#include "voxmend/checkpoint.hpp"
#include "voxmend/dsp/stft.hpp"
#include "voxmend/dsp/wav.hpp"
#include "voxmend/error.hpp"

namespace voxmend::pipeline {

using ag::Tensor;
using dsp::Waveform;

namespace {

constexpr std::size_t kBins = 481;
constexpr std::size_t kFrame = 960;
constexpr std::size_t kHop = agc::kChunk;

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) { return std::chrono::duration<double>(Clock::now() - t0).count(); }

std::string trim(std::string_view s) {
  const auto a = s.find_first_not_of(" \t\r");
  if (a == std::string_view::npos) return {};
  const auto b = s.find_last_not_of(" \t\r");
  return std::string(s.substr(a, b - a + 1));
}

bool parse_bool(const std::string& key, const std::string& v) {
  if (v == "true" || v == "1" || v == "yes" || v == "on") return true;
  if (v == "false" || v == "0" || v == "no" || v == "off") return false;
  throw ConfigError("config: '" + key + "' expects a boolean, got '" + v + "'");
}

std::uint64_t parse_uint(const std::string& key, const std::string& v) {
  std::size_t used = 0;
  unsigned long long x = 0;
  try {
    if (!v.empty() && v[0] == '-') throw std::invalid_argument("negative");
    x = std::stoull(v, &used);
  } catch (const std::exception&) {
    used = 0;
  }
  if (used != v.size() || v.empty()) throw ConfigError("config: '" + key + "' expects a non-negative integer, got '" + v + "'");
  return x;
}

Tensor<float> to_tensor(const dsp::ComplexSpectrogram& s) {
  std::vector<float> data(s.frames * s.bins * 2);
  for (std::size_t i = 0; i < s.data.size(); ++i) {
    data[2 * i] = s.data[i].real();
    data[2 * i + 1] = s.data[i].imag();
  }
  return Tensor<float>({1, s.frames, s.bins, 2}, std::move(data));
}

dsp::ComplexSpectrogram to_spectrogram(const Tensor<float>& t) {
  dsp::ComplexSpectrogram s(t.size(1), t.size(2));
  const auto& d = t.storage();
  for (std::size_t i = 0; i < s.data.size(); ++i) s.data[i] = {d[2 * i], d[2 * i + 1]};
  return s;
}

// Zeroes output frames whose input frame is all zeros.
Tensor<float> silence_gate(const Tensor<float>& out, const Tensor<float>& in) {
  const std::size_t frames = in.size(1), stride = in.size(2) * 2;
  const auto& x = in.storage();
  Tensor<float> y = out.detach();
  auto& d = y.storage();
  for (std::size_t t = 0; t < frames; ++t) {
    const auto b = x.begin() + static_cast<std::ptrdiff_t>(t * stride);
    if (std::all_of(b, b + static_cast<std::ptrdiff_t>(stride), [](float v) { return v == 0.0f; })) {
      std::fill(d.begin() + static_cast<std::ptrdiff_t>(t * stride), d.begin() + static_cast<std::ptrdiff_t>((t + 1) * stride),
                0.0f);
    }
  }
  return y;
}

std::size_t padded_length(std::size_t n) { return std::max(kFrame, (n + kHop - 1) / kHop * kHop); }

template <typename F>
auto in_stage(const char* name, F&& f) {
  try {
    return f();
  } catch (const ConfigError&) {
    throw;
  } catch (const Error& e) {
    throw Error(std::string(name) + ": " + e.what());
  }
}

std::vector<NamedTensor> load_checkpoint(const std::filesystem::path& path, const char* what) {
  try {
    return read_checkpoint(path);
  } catch (const Error& e) {
    throw ConfigError(std::string(what) + " checkpoint " + path.string() + ": " + e.what());
  }
}

std::size_t meta_size(const std::vector<NamedTensor>& t, const std::string& name) {
  return static_cast<std::size_t>(meta_value(t, name));
}

}  // namespace

Stage parse_stage(const std::string& s) {
  if (s == "both") return Stage::Both;
  if (s == "restore") return Stage::Restore;
  if (s == "enhance") return Stage::Enhance;
  throw ConfigError("stage must be both, restore or enhance, got '" + s + "'");
}

std::string to_string(Stage s) {
  switch (s) {
    case Stage::Restore: return "restore";
    case Stage::Enhance: return "enhance";
    default: return "both";
  }
}

void PipelineConfig::validate() const {
  if (n_fft != kFrame || hop != kHop) throw ConfigError("config: the models require n_fft = 960 and hop = 480");
  if (generator_channels == 0 || enhancement_channels == 0) throw ConfigError("config: channel counts must be positive");
  for (const auto* p : {&generator_checkpoint, &taer_checkpoint, &unet_checkpoint, &agc_table}) {
    if (!p->empty() && !std::filesystem::is_regular_file(*p)) throw ConfigError("config: file not found: " + p->string());
  }
}

PipelineConfig PipelineConfig::parse(std::string_view text, const std::filesystem::path& base_dir) {
  PipelineConfig c;
  std::istringstream in{std::string(text)};
  std::string line;
  std::size_t no = 0;
  auto path_of = [&base_dir](const std::string& v) -> std::filesystem::path {
    if (v.empty()) return {};
    std::filesystem::path p(v);
    return p.is_relative() && !base_dir.empty() ? base_dir / p : p;
  };
  while (std::getline(in, line)) {
    ++no;
    const auto hash = line.find('#');
    const std::string body = trim(std::string_view(line).substr(0, hash));
    if (body.empty()) continue;
    const auto eq = body.find('=');
    if (eq == std::string::npos) throw ConfigError("config line " + std::to_string(no) + ": expected key = value");
    const std::string key = trim(std::string_view(body).substr(0, eq));
    const std::string value = trim(std::string_view(body).substr(eq + 1));
    if (key == "generator_checkpoint") c.generator_checkpoint = path_of(value);
    else if (key == "taer_checkpoint") c.taer_checkpoint = path_of(value);
    else if (key == "unet_checkpoint") c.unet_checkpoint = path_of(value);
    else if (key == "agc_table") c.agc_table = path_of(value);
    else if (key == "agc") c.agc = parse_bool(key, value);
    else if (key == "stage") c.stage = parse_stage(value);
    else if (key == "seed") c.seed = parse_uint(key, value);
    else if (key == "generator_channels") c.generator_channels = parse_uint(key, value);
    else if (key == "enhancement_channels") c.enhancement_channels = parse_uint(key, value);
    else if (key == "n_fft") c.n_fft = parse_uint(key, value);
    else if (key == "hop") c.hop = parse_uint(key, value);
    else throw ConfigError("config line " + std::to_string(no) + ": unknown key '" + key + "'");
  }
  c.validate();
  return c;
}

PipelineConfig PipelineConfig::load(const std::filesystem::path& path) {
  std::ifstream f(path);
  if (!f) throw ConfigError("cannot open config " + path.string());
  std::stringstream ss;
  ss << f.rdbuf();
  return parse(ss.str(), path.parent_path());
}

std::string PipelineConfig::to_text() const {
  std::ostringstream o;
  o << "generator_checkpoint = " << generator_checkpoint.string() << "\n"
    << "taer_checkpoint = " << taer_checkpoint.string() << "\n"
    << "unet_checkpoint = " << unet_checkpoint.string() << "\n"
    << "agc_table = " << agc_table.string() << "\n"
    << "agc = " << (agc ? "true" : "false") << "\n"
    << "stage = " << to_string(stage) << "\n"
    << "seed = " << seed << "\n"
    << "generator_channels = " << generator_channels << "\n"
    << "enhancement_channels = " << enhancement_channels << "\n"
    << "n_fft = " << n_fft << "\n"
    << "hop = " << hop << "\n";
  return o.str();
}

double RtfReport::stage_total() const {
  double s = 0;
  for (const auto& st : stages) s += st.seconds;
  return s;
}

std::string RtfReport::to_text() const {
  std::ostringstream o;
  o << "audio_seconds " << audio_seconds << "\nwall_seconds " << wall_seconds << "\nrtf " << rtf << "\nthreads "
    << thread_count << "\n";
  for (const auto& s : stages) o << "stage " << s.name << " " << s.seconds << "\n";
  return o.str();
}

RtfReport make_report(double audio_seconds, double wall_seconds, std::vector<StageTime> stages) {
  if (!(audio_seconds > 0)) throw ValidationError("rtf: audio duration must be positive");
  RtfReport r;
  r.audio_seconds = audio_seconds;
  r.wall_seconds = wall_seconds;
  r.rtf = wall_seconds / audio_seconds;
  r.stages = std::move(stages);
  return r;
}

Pipeline::Pipeline(const PipelineConfig& cfg) : cfg_(cfg) {
  cfg_.validate();
  if (!cfg_.agc_table.empty()) table_ = agc::GainTable::load(cfg_.agc_table);
  if (cfg_.stage != Stage::Enhance) {
    if (cfg_.generator_checkpoint.empty()) {
      auto g = restoration::GeneratorConfig::toy();
      g.base_channels = cfg_.generator_channels;
      gen_.emplace(g, cfg_.seed);
    } else {
      const auto t = load_checkpoint(cfg_.generator_checkpoint, "generator");
      try {
        gen_.emplace(restoration::generator_config_from(t), cfg_.seed);
        gen_->params().import_tensors(t, "gen.");
      } catch (const Error& e) {
        throw ConfigError("generator checkpoint " + cfg_.generator_checkpoint.string() + ": " + e.what());
      }
    }
  }
  if (cfg_.stage != Stage::Restore) {
    auto e = enhancement::EnhancementConfig::toy();
    e.taer_channels = cfg_.enhancement_channels;
    e.unet_channels = cfg_.enhancement_channels;
    std::vector<NamedTensor> taer, unet;
    try {
      if (!cfg_.taer_checkpoint.empty()) {
        taer = load_checkpoint(cfg_.taer_checkpoint, "taer");
        e.wideband_cutoff_bin = meta_size(taer, "meta.taer.cutoff");
        e.taer_order = meta_size(taer, "meta.taer.order");
        e.taer_channels = meta_size(taer, "meta.taer.channels");
        e.taer_tcn_layers = meta_size(taer, "meta.taer.tcn_layers");
      }
      if (!cfg_.unet_checkpoint.empty()) {
        unet = load_checkpoint(cfg_.unet_checkpoint, "unet");
        e.unet_channels = meta_size(unet, "meta.unet.channels");
      }
      e.validate();
      enh_.emplace(e, cfg_.seed + 1);
      if (!taer.empty()) enh_->taer.params().import_tensors(taer, "taer.");
      if (!unet.empty()) enh_->unet.params().import_tensors(unet, "unet.");
    } catch (const ConfigError&) {
      throw;
    } catch (const Error& ex) {
      throw ConfigError(std::string("enhancement checkpoint: ") + ex.what());
    }
  }
}

Tensor<float> Pipeline::run_restoration(const Tensor<float>& spec, ag::Timeline<float>& tl) const {
  if (!gen_) return spec;
  return in_stage("restoration", [&] { return silence_gate(gen_->forward(spec, tl), spec); });
}

Tensor<float> Pipeline::run_enhancement(const Tensor<float>& spec, ag::Timeline<float>& tl) const {
  if (!enh_) return spec;
  return in_stage("enhancement", [&] { return silence_gate(enh_->forward(spec, tl), spec); });
}

Waveform Pipeline::process(const Waveform& in, RtfReport* report) const {
  if (in.empty()) throw ValidationError("pipeline: empty input");
  ag::NoGradGuard guard;
  const auto t_all = Clock::now();
  std::vector<StageTime> times;
  auto timed = [&times](const char* name, auto&& f) {
    const auto t0 = Clock::now();
    auto r = f();
    times.push_back({name, seconds_since(t0)});
    return r;
  };
  const std::size_t n = in.size(), padded = padded_length(n);
  Waveform x = timed("agc", [&] {
    Waveform w = in;
    w.samples.resize(padded, 0.0f);
    if (!cfg_.agc) return w;
    agc::AgcState st;
    st.gain_table = table_;
    return in_stage("agc", [&] { return agc::process(w, st); });
  });
  const auto stft_cfg = dsp::StftConfig::standard();
  auto spec = timed("stft", [&] { return to_tensor(in_stage("stft", [&] { return dsp::stft(x, stft_cfg); })); });
  ag::Timeline<float> tl_gen, tl_enh;
  spec = timed("restoration", [&] { return run_restoration(spec, tl_gen); });
  spec = timed("enhancement", [&] { return run_enhancement(spec, tl_enh); });
  Waveform out = timed("istft", [&] { return in_stage("istft", [&] { return dsp::istft(to_spectrogram(spec), stft_cfg, padded); }); });
  out.samples.resize(n);
  if (report) *report = make_report(static_cast<double>(n) / dsp::kSampleRate, seconds_since(t_all), std::move(times));
  return out;
}

StreamEnhancer::StreamEnhancer(const Pipeline& p) : p_(&p) { reset(); }

void StreamEnhancer::reset() {
  agc_ = agc::AgcState{};
  agc_.gain_table = p_->table_;
  prev_.assign(kHop, 0.0f);
  tail_.assign(kHop, 0.0);
  chunks_ = 0;
  frames_ = 0;
  gen_cache_.reset();
  enh_cache_.reset();
}

std::vector<float> StreamEnhancer::process(std::span<const float> chunk) {
  if (chunk.size() != kHop) throw ShapeError("stream: chunks must hold exactly 480 samples");
  std::vector<float> cur = p_->cfg_.agc ? agc::process_chunk(chunk, agc_) : std::vector<float>(chunk.begin(), chunk.end());
  std::vector<float> out(kHop, 0.0f);
  if (chunks_++ == 0) {
    prev_ = std::move(cur);
    return out;
  }
  const auto& cfg = dsp::StftConfig::standard();
  std::vector<float> frame(kFrame);
  std::copy(prev_.begin(), prev_.end(), frame.begin());
  std::copy(cur.begin(), cur.end(), frame.begin() + kHop);
  dsp::ComplexSpectrogram s(1, kBins);
  dsp::analyze_frame(frame, cfg, s.frame(0));

  ag::NoGradGuard guard;
  auto spec = to_tensor(s);
  {
    ag::Timeline<float> tl(gen_cache_);
    spec = p_->run_restoration(spec, tl);
  }
  {
    ag::Timeline<float> tl(enh_cache_);
    spec = p_->run_enhancement(spec, tl);
  }
  std::vector<double> syn(kFrame);
  dsp::synthesize_frame(to_spectrogram(spec).frame(0), cfg, syn);
  for (std::size_t i = 0; i < kHop; ++i) {
    double norm = cfg.window[i] * cfg.window[i];
    if (frames_ > 0) norm += cfg.window[i + kHop] * cfg.window[i + kHop];
    out[i] = static_cast<float>((tail_[i] + syn[i]) / std::max(norm, dsp::kWindowSumFloor));
    tail_[i] = syn[i + kHop];
  }
  ++frames_;
  prev_ = std::move(cur);
  return out;
}

std::vector<float> StreamEnhancer::flush() {
  std::vector<float> out(kHop, 0.0f);
  if (frames_ > 0) {
    const auto& cfg = dsp::StftConfig::standard();
    for (std::size_t i = 0; i < kHop; ++i) {
      const double norm = cfg.window[i + kHop] * cfg.window[i + kHop];
      out[i] = static_cast<float>(tail_[i] / std::max(norm, dsp::kWindowSumFloor));
    }
  }
  reset();
  return out;
}

Waveform process_streaming(const Pipeline& p, const Waveform& in) {
  if (in.empty()) throw ValidationError("pipeline: empty input");
  const std::size_t n = in.size(), padded = padded_length(n);
  std::vector<float> x(in.samples);
  x.resize(padded, 0.0f);
  StreamEnhancer s(p);
  std::vector<float> out;
  out.reserve(padded + kHop);
  for (std::size_t i = 0; i < padded; i += kHop) {
    auto y = s.process(std::span<const float>(x).subspan(i, kHop));
    out.insert(out.end(), y.begin(), y.end());
  }
  auto y = s.flush();
  out.insert(out.end(), y.begin(), y.end());
  return Waveform(std::vector<float>(out.begin() + kHop, out.begin() + static_cast<std::ptrdiff_t>(kHop + n)));
}

RtfReport enhance_file(const std::filesystem::path& in_path, const std::filesystem::path& out_path,
                       const PipelineConfig& cfg, bool streaming) {
  const auto t0 = Clock::now();
  const auto in = in_stage("read", [&] { return dsp::read_wav(in_path); });
  const double t_read = seconds_since(t0);
  const Pipeline p(cfg);
  const auto t1 = Clock::now();
  RtfReport r;
  Waveform out;
  if (streaming) {
    out = process_streaming(p, in);
    r = make_report(static_cast<double>(in.size()) / dsp::kSampleRate, seconds_since(t1), {{"stream", seconds_since(t1)}});
  } else {
    out = p.process(in, &r);
  }
  const auto t2 = Clock::now();
  in_stage("write", [&] {
    dsp::write_wav(out_path, out);
    return 0;
  });
  r.stages.insert(r.stages.begin(), {"read", t_read});
  r.stages.push_back({"write", seconds_since(t2)});
  r.wall_seconds = std::max(r.wall_seconds, r.stage_total());
  r.rtf = r.wall_seconds / r.audio_seconds;
  return r;
}

RtfReport benchmark_rtf(const PipelineConfig& cfg, double duration_s, std::uint64_t seed) {
  if (!(duration_s >= 10)) throw ValidationError("bench: duration must be at least 10 s");
  const Pipeline p(cfg);
  std::mt19937_64 rng(seed);
  std::normal_distribution<float> nd(0.0f, 0.1f);
  Waveform x(std::vector<float>(static_cast<std::size_t>(duration_s * dsp::kSampleRate)));
  for (auto& v : x.samples) v = nd(rng);
  RtfReport r;
  p.process(x, &r);
  return r;
}

}  // namespace voxmend::pipeline
