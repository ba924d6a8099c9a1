#pragma once

#include <array>
#include <filesystem>
#include <span>
#include <string_view>
#include <vector>

#include "voxmend/dsp/waveform.hpp"

namespace voxmend::agc {

inline constexpr std::size_t kChunk = 480;      // half of the 960-sample STFT frame
inline constexpr std::size_t kTableSize = 128;  // 1 dB bins
inline constexpr double kTableMinDb = -127.0;   // entry i <-> level kTableMinDb + i
inline constexpr double kMaxGainDb = 30.0;
inline constexpr double kTargetDb = -26.0;
inline constexpr double kSilenceGateDb = -70.0;
inline constexpr double kDefaultSmoothing = 0.9;

// Maps chunk RMS level (dBFS) to a target gain (dB). Values between bin
// centres are linearly interpolated; levels outside the table clamp.
class GainTable {
 public:
  GainTable();  // clamp(-26 - level, -30, +30)
  explicit GainTable(const std::array<double, kTableSize>& gains_db);

  // Text format: "level_db gain_db" per line, '#' comments. Missing bins are
  // interpolated from the listed points.
  static GainTable parse(std::string_view text);
  static GainTable load(const std::filesystem::path& path);

  double gain_db(double level_db) const;
  const std::array<double, kTableSize>& entries() const { return gains_db_; }

 private:
  void check() const;
  std::array<double, kTableSize> gains_db_{};
};

struct AgcState {
  double current_gain = 1.0;
  double smoothing_coeff = kDefaultSmoothing;
  GainTable gain_table;
};

// RMS level of a chunk in dBFS (full-scale RMS of 1.0 is 0 dBFS); -inf for silence.
double level_dbfs(std::span<const float> chunk);

// One 480-sample step. Returns the gained (hard-limited) chunk and updates `state`.
std::vector<float> process_chunk(std::span<const float> chunk, AgcState& state);

// Sequential chunks; a trailing partial chunk is gained at the last gain.
dsp::Waveform process(const dsp::Waveform& wave, AgcState& state);

}  // namespace voxmend::agc
