#include <doctest.h>

#include <cmath>
#include <fstream>
#include <random>

#include "support/signals.hpp"
#include "voxmend/checkpoint.hpp"
#include "voxmend/dsp/wav.hpp"
#include "voxmend/error.hpp"
#include "voxmend/pipeline.hpp"

using namespace voxmend;
using namespace voxmend::pipeline;
using dsp::Waveform;
namespace fs = std::filesystem;

namespace {

fs::path scratch(const std::string& name) {
  auto p = fs::temp_directory_path() / ("voxmend_pipeline_" + name);
  fs::remove_all(p);
  fs::create_directories(p);
  return p;
}

PipelineConfig small_config(Stage stage = Stage::Both) {
  PipelineConfig c;
  c.stage = stage;
  c.generator_channels = 4;
  c.enhancement_channels = 4;
  c.seed = 3;
  return c;
}

Waveform speech(std::size_t n) {
  auto w = dsp::read_wav(testsupport::fixture("speech_like_10s.wav"));
  w.samples.resize(n);
  return w;
}

std::vector<char> bytes(const fs::path& p) {
  std::ifstream f(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(f), {}};
}

}  // namespace

TEST_CASE("config parsing") {
  const auto c = PipelineConfig::parse(
      "# comment\n"
      "stage = restore\n"
      "agc = false   # trailing\n"
      "seed = 9\n"
      "generator_channels = 4\n");
  CHECK(c.stage == Stage::Restore);
  CHECK_FALSE(c.agc);
  CHECK(c.seed == 9);
  CHECK(c.generator_channels == 4);
  const auto again = PipelineConfig::parse(c.to_text());
  CHECK(again.to_text() == c.to_text());

  CHECK_THROWS_AS(PipelineConfig::parse("stages = both\n"), ConfigError);
  CHECK_THROWS_AS(PipelineConfig::parse("agc = maybe\n"), ConfigError);
  CHECK_THROWS_AS(PipelineConfig::parse("seed = -1\n"), ConfigError);
  CHECK_THROWS_AS(PipelineConfig::parse("n_fft = 1024\n"), ConfigError);
  CHECK_THROWS_AS(PipelineConfig::parse("just text\n"), ConfigError);
  CHECK_THROWS_AS(PipelineConfig::parse("generator_checkpoint = /nonexistent/g.gspr\n"), ConfigError);

  const auto dir = scratch("cfg");
  write_checkpoint(dir / "g.gspr", restoration::generator_meta(restoration::GeneratorConfig::toy()));
  {
    std::ofstream(dir / "p.cfg") << "generator_checkpoint = g.gspr\n";
  }
  const auto loaded = PipelineConfig::load(dir / "p.cfg");
  CHECK(loaded.generator_checkpoint == dir / "g.gspr");
  // Parameters are missing from that checkpoint.
  CHECK_THROWS_AS(Pipeline{loaded}, ConfigError);
  CHECK_THROWS_AS(PipelineConfig::load(dir / "missing.cfg"), ConfigError);
}

TEST_CASE("rtf report arithmetic") {
  const auto r = make_report(4.0, 1.0, {{"a", 0.25}, {"b", 0.5}});
  CHECK(r.rtf == 0.25);
  CHECK(r.stage_total() == 0.75);
  CHECK(r.thread_count == 1);
  CHECK_THROWS_AS(make_report(0.0, 1.0, {}), ValidationError);
  Pipeline p(small_config());
  RtfReport rep;
  p.process(speech(48000), &rep);
  CHECK(rep.audio_seconds == 1.0);
  CHECK(rep.rtf == rep.wall_seconds / rep.audio_seconds);
  CHECK(rep.stage_total() <= rep.wall_seconds);
  CHECK(rep.stages.size() == 5);
}

TEST_CASE("silence in, silence out") {
  for (Stage s : {Stage::Both, Stage::Restore, Stage::Enhance}) {
    Pipeline p(small_config(s));
    const auto y = p.process(Waveform(std::vector<float>(20000, 0.0f)));
    CHECK(y.size() == 20000);
    CHECK(testsupport::energy(y.samples) == 0.0);
    const auto z = process_streaming(p, Waveform(std::vector<float>(20000, 0.0f)));
    CHECK(testsupport::energy(z.samples) == 0.0);
  }
}

TEST_CASE("offline determinism and file round trip") {
  const auto dir = scratch("det");
  dsp::write_wav(dir / "in.wav", speech(30000));
  const auto cfg = small_config();
  enhance_file(dir / "in.wav", dir / "a.wav", cfg);
  enhance_file(dir / "in.wav", dir / "b.wav", cfg);
  CHECK(bytes(dir / "a.wav") == bytes(dir / "b.wav"));
  CHECK(dsp::read_wav(dir / "a.wav").size() == 30000);
  CHECK_THROWS_AS(enhance_file(dir / "missing.wav", dir / "c.wav", cfg), Error);
}

TEST_CASE("streaming matches offline after the latency") {
  const auto x = speech(48000 + 123);
  for (Stage s : {Stage::Both, Stage::Restore, Stage::Enhance}) {
    for (bool agc : {true, false}) {
      auto cfg = small_config(s);
      cfg.agc = agc;
      Pipeline p(cfg);
      const auto off = p.process(x);
      const auto on = process_streaming(p, x);
      REQUIRE(on.size() == off.size());
      double worst = 0;
      for (std::size_t i = 0; i < off.size(); ++i) worst = std::max(worst, static_cast<double>(std::abs(on.samples[i] - off.samples[i])));
      CHECK_MESSAGE(worst < 1e-5, to_string(s) << " agc " << agc << " diff " << worst);
    }
  }
}

TEST_CASE("stream contract") {
  Pipeline p(small_config());
  StreamEnhancer s(p);
  CHECK(StreamEnhancer::latency() == 480);
  const auto x = speech(4800);
  std::vector<float> first_run;
  for (std::size_t i = 0; i < 4800; i += 480) {
    auto y = s.process(std::span<const float>(x.samples).subspan(i, 480));
    if (i == 0) CHECK(testsupport::energy(y) == 0.0);
    if (i == 480) CHECK(testsupport::energy(y) > 0.0);
    first_run.insert(first_run.end(), y.begin(), y.end());
  }
  s.reset();
  std::vector<float> second_run;
  for (std::size_t i = 0; i < 4800; i += 480) {
    auto y = s.process(std::span<const float>(x.samples).subspan(i, 480));
    second_run.insert(second_run.end(), y.begin(), y.end());
  }
  CHECK(first_run == second_run);
  std::vector<float> odd(100);
  CHECK_THROWS_AS(s.process(odd), ShapeError);
}

TEST_CASE("full pipeline is causal") {
  Pipeline p(small_config());
  auto x = speech(24000);
  const auto base = p.process(x);
  for (std::size_t pos : {5000u, 12345u, 20000u}) {
    auto y = x;
    y.samples[pos] += 0.5f;
    const auto out = p.process(y);
    // Frames that do not contain `pos` are untouched.
    const std::size_t safe = (pos / 480 >= 1 ? pos / 480 - 1 : 0) * 480;
    for (std::size_t i = 0; i < safe; ++i) REQUIRE(out.samples[i] == base.samples[i]);
    double later = 0;
    for (std::size_t i = safe; i < out.size(); ++i) later += std::abs(out.samples[i] - base.samples[i]);
    CHECK(later > 0);
  }
}

TEST_CASE("benchmark gate") {
  CHECK_THROWS_AS(benchmark_rtf(small_config(), 5.0), ValidationError);
}

TEST_CASE("training writes resumable checkpoints") {
  const auto src = scratch("train_src");
  dsp::write_wav(src / "clean.wav", speech(19200));
  dsp::write_wav(src / "noise.wav", Waveform(testsupport::white_noise(9600, 4)));
  sim::ManifestEntry e{src / "clean.wav", src / "noise.wav", {}};
  e.recipe.seed = 1;
  e.recipe.snr_db = 10.0;
  TrainHyper h;
  h.steps = 3;
  h.batch = 1;
  h.segment_seconds = 0.2;
  h.generator_channels = 2;
  h.enhancement_channels = 2;
  h.checkpoint_every = 2;
  h.seed = 5;

  for (TrainStage stage : {TrainStage::Restoration, TrainStage::Enhancement}) {
    const auto full = scratch("train_full"), part = scratch("train_part");
    const auto r = train(stage, {e}, full, h);
    CHECK(r.start_step == 0);
    CHECK(r.end_step == 3);
    auto hp = h;
    hp.steps = 2;
    train(stage, {e}, part, hp);
    const auto resumed = train(stage, {e}, part, h);
    CHECK(resumed.start_step == 2);
    for (const auto& c : r.checkpoints) CHECK(bytes(c) == bytes(part / c.filename()));
    CHECK(bytes(r.loss_csv) == bytes(part / r.loss_csv.filename()));
    std::ifstream csv(r.loss_csv);
    std::size_t lines = 0;
    for (std::string l; std::getline(csv, l);) ++lines;
    CHECK(lines == 4);
  }
  // A trained generator plugs into the pipeline.
  const auto dir = scratch("train_full");
  train(TrainStage::Restoration, {e}, dir, h);
  PipelineConfig cfg = small_config(Stage::Restore);
  cfg.generator_checkpoint = dir / "restoration.gspr";
  Pipeline p(cfg);
  CHECK(p.process(speech(9600)).size() == 9600);

  auto bad = h;
  bad.lr = 0;
  CHECK_THROWS_AS(train(TrainStage::Restoration, {e}, dir, bad), ConfigError);
  CHECK_THROWS_AS(parse_train_stage("both"), ConfigError);
}

TEST_CASE("dataset generation") {
  const auto src = scratch("ds_src");
  dsp::write_wav(src / "clean.wav", speech(48000));
  dsp::write_wav(src / "noise.wav", Waveform(testsupport::white_noise(20000, 8)));
  sim::ManifestEntry e{src / "clean.wav", src / "noise.wav", {}};
  e.recipe.seed = 2;
  e.recipe.snr_db = 7.5;

  const auto empty = scratch("ds_empty");
  auto r0 = make_dataset({e}, empty, 0, 1);
  CHECK(r0.written == 0);
  CHECK(fs::file_size(r0.manifest) == 0);
  std::size_t files = 0;
  for ([[maybe_unused]] const auto& f : fs::directory_iterator(empty)) ++files;
  CHECK(files == 1);

  const auto a = scratch("ds_a"), b = scratch("ds_b");
  auto ra = make_dataset({e}, a, 3, 11);
  make_dataset({e}, b, 3, 11);
  CHECK(ra.written == 3);
  CHECK(bytes(a / "manifest.jsonl") == bytes(b / "manifest.jsonl"));
  for (int i = 0; i < 3; ++i) {
    const std::string n = "pair_0000" + std::to_string(i) + "_degraded.wav";
    CHECK(bytes(a / n) == bytes(b / n));
  }
  // First pair uses the entry recipe: re-measure its SNR.
  const auto deg = dsp::read_wav(a / "pair_00000_degraded.wav");
  const auto tgt = dsp::read_wav(a / "pair_00000_target.wav");
  double ps = 0, pn = 0;
  for (std::size_t i = 0; i < deg.size(); ++i) {
    ps += static_cast<double>(tgt.samples[i]) * tgt.samples[i];
    pn += static_cast<double>(deg.samples[i] - tgt.samples[i]) * (deg.samples[i] - tgt.samples[i]);
  }
  CHECK(std::abs(10 * std::log10(ps / pn) - 7.5) < 0.1);

  sim::ManifestEntry missing{src / "nope.wav", src / "noise.wav", e.recipe};
  auto rp = make_dataset({e, missing}, scratch("ds_partial"), 2, 1);
  CHECK(rp.written == 1);
  CHECK_FALSE(rp.warnings.empty());
}
