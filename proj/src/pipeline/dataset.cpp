#include <cmath>
#include <cstdio>
#include <fstream>
#include <iomanip>
#include <map>
#include <sstream>

#include <json.hpp>

#include "voxmend/dsp/wav.hpp"
#include "voxmend/error.hpp"
#include "voxmend/pipeline.hpp"

namespace voxmend::pipeline {

namespace fs = std::filesystem;

namespace {

std::uint64_t pair_seed(std::uint64_t seed, std::size_t i) {
  std::seed_seq sq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                   static_cast<std::uint32_t>(i), 0x5eedu};
  std::mt19937_64 rng(sq);
  return rng();
}

std::string pair_name(std::size_t i, const char* kind) {
  std::ostringstream o;
  o << "pair_" << std::setw(5) << std::setfill('0') << i << "_" << kind << ".wav";
  return o.str();
}

}  // namespace

DatasetResult make_dataset(const std::vector<sim::ManifestEntry>& manifest, const fs::path& out_dir,
                           std::size_t n_pairs, std::uint64_t seed) {
  DatasetResult result;
  fs::create_directories(out_dir);
  result.manifest = out_dir / "manifest.jsonl";
  std::ofstream out(result.manifest, std::ios::trunc);
  if (!out) throw IoError("cannot write " + result.manifest.string());
  if (n_pairs > 0 && manifest.empty()) {
    result.warnings.push_back("manifest has no sources; no pairs written");
    return result;
  }
  std::map<fs::path, std::optional<dsp::Waveform>> cache;
  auto load = [&](const fs::path& p) -> const std::optional<dsp::Waveform>& {
    auto it = cache.find(p);
    if (it != cache.end()) return it->second;
    std::optional<dsp::Waveform> w;
    try {
      w = dsp::read_wav(p);
    } catch (const Error& e) {
      result.warnings.push_back(e.what());
    }
    return cache.emplace(p, std::move(w)).first->second;
  };
  for (std::size_t i = 0; i < n_pairs; ++i) {
    const auto& entry = manifest[i % manifest.size()];
    sim::DegradationRecipe recipe = entry.recipe;
    if (i >= manifest.size()) {
      recipe = sim::sample_recipe(pair_seed(seed, i));
      if (entry.noise_path.empty()) recipe.snr_db.reset();
    }
    const auto& clean = load(entry.clean_path);
    if (!clean) continue;
    static const std::optional<dsp::Waveform> no_noise = dsp::Waveform{};
    const auto& noise = recipe.snr_db ? load(entry.noise_path) : no_noise;
    if (!noise) continue;
    sim::SimulatedPair pair;
    try {
      pair = sim::simulate_pair(*clean, *noise, recipe);
    } catch (const ValidationError& e) {
      result.warnings.push_back("pair " + std::to_string(i) + ": " + e.what());
      continue;
    }
    const auto deg = out_dir / pair_name(i, "degraded"), tgt = out_dir / pair_name(i, "target");
    dsp::write_wav(deg, pair.degraded);
    dsp::write_wav(tgt, pair.target);
    nlohmann::json line{{"degraded_path", deg.filename().string()},
                        {"target_path", tgt.filename().string()},
                        {"clean_path", entry.clean_path.string()},
                        {"noise_path", entry.noise_path.string()},
                        {"recipe", nlohmann::json::parse(sim::recipe_to_json(recipe))}};
    out << line.dump() << "\n";
    ++result.written;
  }
  if (result.written < n_pairs) {
    result.warnings.push_back("wrote " + std::to_string(result.written) + " of " + std::to_string(n_pairs) + " pairs");
  }
  return result;
}

}  // namespace voxmend::pipeline
