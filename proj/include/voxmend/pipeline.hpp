#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "voxmend/ag/layers.hpp"
#include "voxmend/agc.hpp"
#include "voxmend/degrade.hpp"
#include "voxmend/dsp/waveform.hpp"
#include "voxmend/enhancement.hpp"
#include "voxmend/restoration.hpp"

namespace voxmend::pipeline {

enum class Stage { Both, Restore, Enhance };

Stage parse_stage(const std::string& s);  // both | restore | enhance
std::string to_string(Stage s);

// Flat key=value file. An empty checkpoint path means a randomly initialised
// network of the configured size (seeded); a given path must exist.
struct PipelineConfig {
  std::filesystem::path generator_checkpoint;
  std::filesystem::path taer_checkpoint;
  std::filesystem::path unet_checkpoint;
  std::filesystem::path agc_table;
  bool agc = true;
  Stage stage = Stage::Both;
  std::uint64_t seed = 0;
  std::size_t generator_channels = 8;
  std::size_t enhancement_channels = 8;
  std::size_t n_fft = 960;
  std::size_t hop = 480;

  void validate() const;
  // Relative paths are resolved against `base_dir`.
  static PipelineConfig parse(std::string_view text, const std::filesystem::path& base_dir = {});
  static PipelineConfig load(const std::filesystem::path& path);
  std::string to_text() const;
};

struct StageTime {
  std::string name;
  double seconds = 0;
};

struct RtfReport {
  double audio_seconds = 0;
  double wall_seconds = 0;
  double rtf = 0;
  int thread_count = 1;
  std::vector<StageTime> stages;

  double stage_total() const;
  std::string to_text() const;
};

RtfReport make_report(double audio_seconds, double wall_seconds, std::vector<StageTime> stages);

// Loaded models plus the offline path:
// pad -> AGC -> STFT -> generator -> enhancement -> iSTFT -> trim.
// The input is zero padded to whole 480-sample chunks (at least 960) so the
// streaming path sees identical frames. Output frames whose stage input frame
// is digital silence are forced to zero.
class Pipeline {
 public:
  explicit Pipeline(const PipelineConfig& cfg);

  dsp::Waveform process(const dsp::Waveform& in, RtfReport* report = nullptr) const;
  const PipelineConfig& config() const { return cfg_; }
  static constexpr std::size_t latency() { return agc::kChunk; }

 private:
  friend class StreamEnhancer;
  ag::Tensor<float> run_restoration(const ag::Tensor<float>& spec, ag::Timeline<float>& tl) const;
  ag::Tensor<float> run_enhancement(const ag::Tensor<float>& spec, ag::Timeline<float>& tl) const;

  PipelineConfig cfg_;
  agc::GainTable table_;
  std::optional<restoration::Generator<float>> gen_;
  std::optional<enhancement::Enhancer<float>> enh_;
};

// Chunk-by-chunk inference with one hop of latency: the first call returns
// zeros, call i returns the output for chunk i-1, flush() returns the last chunk.
class StreamEnhancer {
 public:
  explicit StreamEnhancer(const Pipeline& p);

  static constexpr std::size_t latency() { return Pipeline::latency(); }
  std::vector<float> process(std::span<const float> chunk);  // exactly 480 samples
  std::vector<float> flush();                                 // then resets
  void reset();

 private:
  const Pipeline* p_;
  agc::AgcState agc_;
  std::vector<float> prev_;
  std::vector<double> tail_;
  std::size_t chunks_ = 0;
  std::size_t frames_ = 0;
  ag::StreamCache<float> gen_cache_, enh_cache_;
};

// Streams `in` through a fresh StreamEnhancer and drops the latency.
dsp::Waveform process_streaming(const Pipeline& p, const dsp::Waveform& in);

RtfReport enhance_file(const std::filesystem::path& in_path, const std::filesystem::path& out_path,
                       const PipelineConfig& cfg, bool streaming = false);

// Single-thread timing of the offline path on seeded white noise; duration >= 10 s.
RtfReport benchmark_rtf(const PipelineConfig& cfg, double duration_s, std::uint64_t seed = 0);

enum class TrainStage { Restoration, Enhancement };
TrainStage parse_train_stage(const std::string& s);  // restoration | enhancement

struct TrainHyper {
  std::size_t steps = 1000;
  double lr = 2e-4;
  std::size_t batch = 16;
  std::uint64_t seed = 0;
  std::size_t checkpoint_every = 500;
  double segment_seconds = 4.0;
  std::size_t generator_channels = 8;
  std::size_t enhancement_channels = 8;
  // Enhancement stage only: restoration model applied to the degraded input.
  std::filesystem::path generator_checkpoint;

  void validate() const;
};

struct TrainResult {
  std::size_t start_step = 0;  // > 0 when resumed
  std::size_t end_step = 0;
  std::vector<std::filesystem::path> checkpoints;
  std::filesystem::path loss_csv;
};

// Alternating D/G steps (restoration) or plain steps (enhancement) on pairs
// simulated from the manifest. Resumes from the checkpoint in out_dir when
// present; the data order of step s depends only on (seed, s).
TrainResult train(TrainStage stage, const std::vector<sim::ManifestEntry>& manifest,
                  const std::filesystem::path& out_dir, const TrainHyper& hyper);

struct DatasetResult {
  std::size_t written = 0;
  std::vector<std::string> warnings;
  std::filesystem::path manifest;
};

// Pair i draws its sources from entry i mod M. The first M pairs use the
// entry recipes; later pairs sample a recipe from (seed, i). Unreadable
// sources are skipped with a warning. Writes pair_NNNNN_{degraded,target}.wav
// and manifest.jsonl with the resolved recipes.
DatasetResult make_dataset(const std::vector<sim::ManifestEntry>& manifest, const std::filesystem::path& out_dir,
                           std::size_t n_pairs, std::uint64_t seed);

}  // namespace voxmend::pipeline
