#include "voxmend/agc.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <map>
#include <sstream>
#include <string>

#include "voxmend/error.hpp"

namespace voxmend::agc {
namespace {

double db_to_linear(double db) { return std::pow(10.0, db / 20.0); }

const double kMinGain = db_to_linear(-kMaxGainDb);
const double kMaxGain = db_to_linear(kMaxGainDb);

}  // namespace

GainTable::GainTable() {
  for (std::size_t i = 0; i < kTableSize; ++i) {
    const double level = kTableMinDb + static_cast<double>(i);
    gains_db_[i] = std::clamp(kTargetDb - level, -kMaxGainDb, kMaxGainDb);
  }
}

GainTable::GainTable(const std::array<double, kTableSize>& gains_db) : gains_db_(gains_db) { check(); }

void GainTable::check() const {
  for (std::size_t i = 0; i < kTableSize; ++i) {
    if (!std::isfinite(gains_db_[i]) || std::abs(gains_db_[i]) > kMaxGainDb) {
      throw ValidationError("gain table entry " + std::to_string(i) + " outside [-30, 30] dB");
    }
    if (i > 0 && gains_db_[i] > gains_db_[i - 1]) {
      throw ValidationError("gain table must be non-increasing in input level");
    }
  }
}

GainTable GainTable::parse(std::string_view text) {
  std::map<double, double> points;
  std::istringstream is{std::string(text)};
  std::string line;
  int line_no = 0;
  while (std::getline(is, line)) {
    ++line_no;
    if (auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
    std::istringstream ls(line);
    double level = 0.0, gain = 0.0;
    if (!(ls >> level)) continue;
    std::string rest;
    if (!(ls >> gain) || (ls >> rest)) {
      throw ParseError("gain table line " + std::to_string(line_no) + ": expected 'level_db gain_db'");
    }
    points[level] = gain;
  }
  if (points.empty()) throw ParseError("gain table has no entries");
  std::array<double, kTableSize> gains{};
  for (std::size_t i = 0; i < kTableSize; ++i) {
    const double level = kTableMinDb + static_cast<double>(i);
    auto hi = points.lower_bound(level);
    if (hi == points.end()) {
      gains[i] = std::prev(hi)->second;
    } else if (hi == points.begin() || hi->first == level) {
      gains[i] = hi->second;
    } else {
      auto lo = std::prev(hi);
      const double a = (level - lo->first) / (hi->first - lo->first);
      gains[i] = lo->second + a * (hi->second - lo->second);
    }
  }
  return GainTable(gains);
}

GainTable GainTable::load(const std::filesystem::path& path) {
  std::ifstream is(path);
  if (!is) throw IoError("cannot open gain table '" + path.string() + "'");
  std::stringstream ss;
  ss << is.rdbuf();
  return parse(ss.str());
}

double GainTable::gain_db(double level_db) const {
  const double pos = std::clamp(level_db - kTableMinDb, 0.0, static_cast<double>(kTableSize - 1));
  const auto i = static_cast<std::size_t>(std::floor(pos));
  if (i + 1 >= kTableSize) return gains_db_[kTableSize - 1];
  const double a = pos - static_cast<double>(i);
  return gains_db_[i] + a * (gains_db_[i + 1] - gains_db_[i]);
}

double level_dbfs(std::span<const float> chunk) {
  double energy = 0.0;
  for (float v : chunk) energy += static_cast<double>(v) * v;
  if (chunk.empty() || energy == 0.0) return -std::numeric_limits<double>::infinity();
  return 10.0 * std::log10(energy / static_cast<double>(chunk.size()));
}

std::vector<float> process_chunk(std::span<const float> chunk, AgcState& state) {
  if (chunk.size() != kChunk) {
    throw ShapeError("agc chunk must have " + std::to_string(kChunk) + " samples, got " +
                     std::to_string(chunk.size()));
  }
  const double level = level_dbfs(chunk);
  if (level >= kSilenceGateDb) {
    const double target = db_to_linear(state.gain_table.gain_db(level));
    const double a = state.smoothing_coeff;
    state.current_gain = std::clamp(a * state.current_gain + (1.0 - a) * target, kMinGain, kMaxGain);
  }
  std::vector<float> out(chunk.size());
  for (std::size_t i = 0; i < chunk.size(); ++i) {
    out[i] = static_cast<float>(std::clamp(chunk[i] * state.current_gain, -1.0, 1.0));
  }
  return out;
}

dsp::Waveform process(const dsp::Waveform& wave, AgcState& state) {
  std::vector<float> out(wave.size());
  std::size_t pos = 0;
  for (; pos + kChunk <= wave.size(); pos += kChunk) {
    auto gained = process_chunk(std::span(wave.samples).subspan(pos, kChunk), state);
    std::copy(gained.begin(), gained.end(), out.begin() + static_cast<std::ptrdiff_t>(pos));
  }
  for (; pos < wave.size(); ++pos) {
    out[pos] = static_cast<float>(std::clamp(wave.samples[pos] * state.current_gain, -1.0, 1.0));
  }
  return dsp::Waveform(std::move(out), wave.sample_rate);
}

}  // namespace voxmend::agc
