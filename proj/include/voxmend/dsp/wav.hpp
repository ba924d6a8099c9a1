#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <vector>

#include "voxmend/dsp/waveform.hpp"

namespace voxmend::dsp {

// Interleaved samples exactly as stored in a file, scaled to [-1, 1].
struct WavData {
  int sample_rate = 0;
  int channels = 0;
  std::vector<float> interleaved;
};

// Parses a RIFF/WAVE byte image (PCM16 or IEEE float32).
WavData decode_wav(std::span<const std::uint8_t> bytes);

// Reads any supported WAV, downmixes to mono and resamples to 48 kHz.
Waveform read_wav(const std::filesystem::path& path);

// Writes IEEE float32 mono 48 kHz.
void write_wav(const std::filesystem::path& path, const Waveform& wave);

// Writes PCM16 at an arbitrary rate/channel count (used to build fixtures).
void write_wav_pcm16(const std::filesystem::path& path, std::span<const float> interleaved,
                     int sample_rate, int channels);

// Windowed-sinc resampler with a 64-tap kernel.
std::vector<float> resample(std::span<const float> in, int in_rate, int out_rate);

}  // namespace voxmend::dsp
