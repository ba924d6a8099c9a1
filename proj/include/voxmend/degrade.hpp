#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include "voxmend/dsp/stft.hpp"
#include "voxmend/dsp/waveform.hpp"

namespace voxmend::sim {

// Shoebox room. Walls are ordered x=0, x=L, y=0, y=W, z=0, z=H.
struct RoomSpec {
  std::array<double, 3> dims{4.0, 5.0, 3.0};
  std::array<double, 3> source{1.0, 1.5, 1.2};
  std::array<double, 3> mic{2.7, 3.6, 1.6};
  std::array<double, 6> beta{0.9, 0.9, 0.9, 0.9, 0.9, 0.9};
  int max_order = 20;  // total number of wall reflections
  double speed_of_sound = 343.0;

  void validate() const;
  double direct_distance() const;
};

// Image-method impulse response: each image source adds an impulse of
// prod(beta^hits) / (4 pi d) at delay d / c, split linearly between the two
// nearest samples. The response ends one sample after the latest image.
dsp::Waveform simulate_rir(const RoomSpec& room);

// Eyring reverberation time 0.161 V / (-S ln(1 - abar)) with alpha = 1 - beta^2
// averaged over wall area.
double eyring_t60(const RoomSpec& room);

// Schroeder backward-integrated decay curve in dB (0 dB at `from`).
std::vector<double> energy_decay_db(const dsp::Waveform& rir, std::size_t from = 0);

// Full linear convolution (length N + M - 1), FFT based.
dsp::Waveform apply_reverb(const dsp::Waveform& wave, const dsp::Waveform& rir);

// Loops or truncates `noise` to the clean length and scales it so the clean
// to noise power ratio equals snr_db. +inf returns the clean signal.
dsp::Waveform mix_at_snr(const dsp::Waveform& clean, const dsp::Waveform& noise, double snr_db);
// The scaled noise alone.
dsp::Waveform scaled_noise(const dsp::Waveform& clean, const dsp::Waveform& noise, double snr_db);

inline constexpr std::size_t kLowpassTaps = 255;
// Zero-phase 255-tap Kaiser-windowed sinc with unit DC gain. Cutoffs at or
// above 24 kHz pass the signal through unchanged.
std::vector<double> lowpass_taps(double cutoff_hz);
dsp::Waveform lowpass(const dsp::Waveform& wave, double cutoff_hz);

dsp::Waveform clip(const dsp::Waveform& wave, double level);
dsp::Waveform halfwave_rectify(const dsp::Waveform& wave);
// tanh(drive x) / tanh(drive); drive must be > 0.
dsp::Waveform nonlinear_distort(const dsp::Waveform& wave, double drive);

inline constexpr std::size_t kPacketFrame = 960;  // 20 ms
inline constexpr std::size_t kPacketRamp = 48;    // 1 ms

// Two-state Markov chain over frames: true marks a lost frame. The loss
// state has stationary probability `rate` and mean run length `burst_mean`.
std::vector<bool> gilbert_losses(std::size_t frames, double rate, double burst_mean, std::mt19937_64& rng);
// Zeroes lost frames; the signal fades out over the first and back in over
// the last millisecond of every lost run (raised cosine).
dsp::Waveform apply_losses(const dsp::Waveform& wave, const std::vector<bool>& lost);
dsp::Waveform packet_loss(const dsp::Waveform& wave, double rate, double burst_mean, std::mt19937_64& rng);

enum class CodecLevel { None, Low, Med, High };
CodecLevel parse_codec_level(const std::string& s);
std::string to_string(CodecLevel level);
double codec_step_db(CodecLevel level);     // 3, 1.5, 0.75
double codec_cutoff_hz(CodecLevel level);   // 12k, 16k, 20k

// Per frame and ERB band (dominant-band partition of the bins), rounds the
// band RMS level in dB to the level's step and zeroes bins at or above the cutoff.
void quantize_spectrum(dsp::ComplexSpectrogram& spec, CodecLevel level);
dsp::Waveform codec_surrogate(const dsp::Waveform& wave, CodecLevel level);

struct DegradationRecipe {
  std::uint64_t seed = 0;
  std::optional<double> snr_db;  // [-5, 25]; absent means no noise
  std::optional<RoomSpec> rir;
  std::optional<double> cutoff_hz;   // [1000, 24000]
  std::optional<double> clip_level;  // [0.1, 1.0]
  bool halfwave = false;
  std::optional<double> drive;  // (0, 20]
  double packet_loss_rate = 0.0;  // [0, 0.3]
  double burst_mean_frames = 2.0;
  CodecLevel codec = CodecLevel::None;

  void validate() const;
};

std::string recipe_to_json(const DegradationRecipe& r);
DegradationRecipe recipe_from_json(const std::string& text);

// Uniform choice among impairment classes with random parameters.
DegradationRecipe sample_recipe(std::uint64_t seed);

struct SimulatedPair {
  dsp::Waveform degraded;
  dsp::Waveform target;
};

inline constexpr double kTargetPeakDb = -3.0;
inline constexpr double kEarlyReflectionSeconds = 0.05;

// target: clean through the direct path plus the first 50 ms of the RIR,
// peak-normalised to -3 dBFS. degraded: the same gain applied to clean, then
// distort, reverb, mix, lowpass, clip / halfwave, codec, packet loss.
// Both are rescaled together if the degraded peak exceeds 1.
SimulatedPair simulate_pair(const dsp::Waveform& clean, const dsp::Waveform& noise, const DegradationRecipe& recipe);

// Direct path starts at the earliest sample above 1% of the RIR peak.
dsp::Waveform early_rir(const dsp::Waveform& rir);

struct ManifestEntry {
  std::filesystem::path clean_path;
  std::filesystem::path noise_path;
  DegradationRecipe recipe;
};

// One JSON object per line; blank lines are skipped. Errors name the line.
std::vector<ManifestEntry> parse_manifest(const std::string& text);
std::vector<ManifestEntry> read_manifest(const std::filesystem::path& path);
std::string manifest_line(const ManifestEntry& e);

}  // namespace voxmend::sim
