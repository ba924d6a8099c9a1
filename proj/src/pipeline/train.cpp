#include <algorithm>
#include <cmath>
#include <fstream>
#include <random>
#include <sstream>

#include "voxmend/checkpoint.hpp"
#include "voxmend/dsp/wav.hpp"
#include "voxmend/error.hpp"
#include "voxmend/pipeline.hpp"

namespace voxmend::pipeline {

using ag::Tensor;
using dsp::Waveform;
namespace fs = std::filesystem;

namespace {

struct Pair {
  Waveform degraded, target;
};

std::vector<Pair> simulate_all(const std::vector<sim::ManifestEntry>& manifest) {
  std::vector<Pair> out;
  for (const auto& e : manifest) {
    const auto clean = dsp::read_wav(e.clean_path);
    const Waveform noise = e.noise_path.empty() ? Waveform{} : dsp::read_wav(e.noise_path);
    auto p = sim::simulate_pair(clean, noise, e.recipe);
    out.push_back({std::move(p.degraded), std::move(p.target)});
  }
  return out;
}

// Batch for step s: entries and segment offsets drawn from (seed, s) only.
std::pair<Tensor<float>, Tensor<float>> batch_for(const std::vector<Pair>& pairs, std::size_t seg, std::size_t batch,
                                                  std::uint64_t seed, std::size_t step) {
  std::seed_seq sq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                   static_cast<std::uint32_t>(step), static_cast<std::uint32_t>(step >> 32)};
  std::mt19937_64 rng(sq);
  std::vector<float> clean, degraded;
  clean.reserve(batch * seg);
  degraded.reserve(batch * seg);
  for (std::size_t b = 0; b < batch; ++b) {
    const auto& p = pairs[std::uniform_int_distribution<std::size_t>(0, pairs.size() - 1)(rng)];
    const std::size_t off = std::uniform_int_distribution<std::size_t>(0, p.target.size() - seg)(rng);
    clean.insert(clean.end(), p.target.samples.begin() + static_cast<std::ptrdiff_t>(off),
                 p.target.samples.begin() + static_cast<std::ptrdiff_t>(off + seg));
    degraded.insert(degraded.end(), p.degraded.samples.begin() + static_cast<std::ptrdiff_t>(off),
                    p.degraded.samples.begin() + static_cast<std::ptrdiff_t>(off + seg));
  }
  return {Tensor<float>({batch, seg}, std::move(clean)), Tensor<float>({batch, seg}, std::move(degraded))};
}

void write_atomic(const fs::path& path, const std::vector<NamedTensor>& t) {
  const fs::path tmp = path.string() + ".tmp";
  write_checkpoint(tmp, t);
  fs::rename(tmp, path);
}

// Keeps the header and rows with step < `keep`.
void truncate_csv(const fs::path& path, std::size_t keep, const std::string& header) {
  std::vector<std::string> rows{header};
  if (std::ifstream in(path); in) {
    std::string line;
    std::getline(in, line);
    while (std::getline(in, line)) {
      if (line.empty()) continue;
      if (std::stoull(line.substr(0, line.find(','))) < keep) rows.push_back(line);
    }
  }
  std::ofstream out(path, std::ios::trunc);
  for (const auto& r : rows) out << r << "\n";
}

std::size_t stored_step(const std::vector<NamedTensor>& t) {
  return static_cast<std::size_t>(meta_value(t, "meta.train.step"));
}

void check_finite(double v, std::size_t step, std::size_t last_good) {
  if (!std::isfinite(v)) {
    throw NumericalError("train: non-finite loss at step " + std::to_string(step) + "; last good checkpoint is step " +
                         std::to_string(last_good));
  }
}

}  // namespace

TrainStage parse_train_stage(const std::string& s) {
  if (s == "restoration" || s == "restore") return TrainStage::Restoration;
  if (s == "enhancement" || s == "enhance") return TrainStage::Enhancement;
  throw ConfigError("train stage must be restoration or enhancement, got '" + s + "'");
}

void TrainHyper::validate() const {
  if (!(lr > 0) || !std::isfinite(lr)) throw ConfigError("train: lr must be positive");
  if (batch == 0) throw ConfigError("train: batch must be positive");
  if (checkpoint_every == 0) throw ConfigError("train: checkpoint interval must be positive");
  if (!(segment_seconds > 0)) throw ConfigError("train: segment length must be positive");
  if (generator_channels == 0 || enhancement_channels == 0) throw ConfigError("train: channel counts must be positive");
  if (!generator_checkpoint.empty() && !fs::is_regular_file(generator_checkpoint)) {
    throw ConfigError("train: generator checkpoint not found: " + generator_checkpoint.string());
  }
}

TrainResult train(TrainStage stage, const std::vector<sim::ManifestEntry>& manifest, const fs::path& out_dir,
                  const TrainHyper& hyper) {
  hyper.validate();
  if (manifest.empty()) throw ConfigError("train: manifest has no entries");
  fs::create_directories(out_dir);
  const auto pairs = simulate_all(manifest);
  std::size_t shortest = pairs.front().target.size();
  for (const auto& p : pairs) shortest = std::min(shortest, p.target.size());
  const std::size_t seg = std::min(shortest, static_cast<std::size_t>(hyper.segment_seconds * dsp::kSampleRate));
  const ag::AdamWConfig opt{hyper.lr, 0.9, 0.999, 1e-8, 0.01};

  TrainResult result;
  if (stage == TrainStage::Restoration) {
    auto gcfg = restoration::GeneratorConfig::toy();
    gcfg.base_channels = hyper.generator_channels;
    restoration::GanModel<float> model(gcfg, restoration::default_discriminators(hyper.generator_channels), hyper.seed,
                                       opt);
    const fs::path ckpt = out_dir / "restoration.gspr";
    result.loss_csv = out_dir / "restoration_loss.csv";
    if (fs::exists(ckpt)) {
      const auto t = read_checkpoint(ckpt);
      restoration::import_gan(model, t);
      result.start_step = stored_step(t);
    }
    truncate_csv(result.loss_csv, result.start_step, "step,d_loss,g_total,fullband,subband,adv,feat");
    std::ofstream csv(result.loss_csv, std::ios::app);
    const fb::PqmfBank bank;
    const restoration::GanLossConfig lcfg;
    std::size_t last_good = result.start_step;
    auto save = [&](std::size_t step) {
      auto t = restoration::export_gan(model);
      t.push_back(meta_tensor("meta.train.step", static_cast<float>(step)));
      write_atomic(ckpt, t);
      last_good = step;
    };
    for (std::size_t s = result.start_step; s < hyper.steps; ++s) {
      const auto [clean, degraded] = batch_for(pairs, seg, hyper.batch, hyper.seed, s);
      double ld = 0;
      restoration::GeneratorStepReport g;
      try {
        ld = restoration::train_step_d(model, clean, degraded);
        check_finite(ld, s, last_good);
        g = restoration::train_step_g(model, clean, degraded, bank, lcfg);
        check_finite(g.total, s, last_good);
      } catch (const NumericalError& e) {
        throw NumericalError(std::string(e.what()) + " (last good checkpoint step " + std::to_string(last_good) + ")");
      }
      csv << s << "," << ld << "," << g.total << "," << g.fullband << "," << g.subband << "," << g.adv << "," << g.feat
          << "\n";
      csv.flush();
      if ((s + 1) % hyper.checkpoint_every == 0 || s + 1 == hyper.steps) save(s + 1);
    }
    result.end_step = std::max(result.start_step, hyper.steps);
    result.checkpoints = {ckpt};
    return result;
  }

  auto ecfg = enhancement::EnhancementConfig::toy();
  ecfg.taer_channels = hyper.enhancement_channels;
  ecfg.unet_channels = hyper.enhancement_channels;
  enhancement::Enhancer<float> model(ecfg, hyper.seed, opt);
  std::optional<restoration::Generator<float>> gen;
  if (!hyper.generator_checkpoint.empty()) {
    const auto t = read_checkpoint(hyper.generator_checkpoint);
    gen.emplace(restoration::generator_config_from(t), hyper.seed);
    gen->params().import_tensors(t, "gen.");
  }
  const fs::path taer_ckpt = out_dir / "taer.gspr", unet_ckpt = out_dir / "unet.gspr";
  result.loss_csv = out_dir / "enhancement_loss.csv";
  if (fs::exists(taer_ckpt) && fs::exists(unet_ckpt)) {
    const auto ta = read_checkpoint(taer_ckpt), un = read_checkpoint(unet_ckpt);
    enhancement::import_taer(model, ta);
    enhancement::import_unet(model, un);
    result.start_step = stored_step(ta);
    if (stored_step(un) != result.start_step) throw ValidationError("train: taer and unet checkpoints disagree on the step");
  }
  truncate_csv(result.loss_csv, result.start_step, "step,total,cplx,mag");
  std::ofstream csv(result.loss_csv, std::ios::app);
  std::size_t last_good = result.start_step;
  auto save = [&](std::size_t step) {
    auto ta = enhancement::export_taer(model), un = enhancement::export_unet(model);
    ta.push_back(meta_tensor("meta.train.step", static_cast<float>(step)));
    un.push_back(meta_tensor("meta.train.step", static_cast<float>(step)));
    write_atomic(taer_ckpt, ta);
    write_atomic(unet_ckpt, un);
    last_good = step;
  };
  for (std::size_t s = result.start_step; s < hyper.steps; ++s) {
    auto [clean, degraded] = batch_for(pairs, seg, hyper.batch, hyper.seed, s);
    if (gen) {
      ag::NoGradGuard guard;
      degraded = restoration::restore_waves(*gen, degraded).detach();
    }
    enhancement::EnhanceStepReport r;
    try {
      r = enhancement::enhance_train_step(model, clean, degraded);
      check_finite(r.total, s, last_good);
    } catch (const NumericalError& e) {
      throw NumericalError(std::string(e.what()) + " (last good checkpoint step " + std::to_string(last_good) + ")");
    }
    csv << s << "," << r.total << "," << r.cplx << "," << r.mag << "\n";
    csv.flush();
    if ((s + 1) % hyper.checkpoint_every == 0 || s + 1 == hyper.steps) save(s + 1);
  }
  result.end_step = std::max(result.start_step, hyper.steps);
  result.checkpoints = {taer_ckpt, unet_ckpt};
  return result;
}

}  // namespace voxmend::pipeline
