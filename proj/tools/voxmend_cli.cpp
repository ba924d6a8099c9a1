#include <cstdio>
#include <iostream>

#include <CLI11.hpp>

#include "voxmend/error.hpp"
#include "voxmend/pipeline.hpp"

using namespace voxmend;
using namespace voxmend::pipeline;

namespace {

constexpr int kConfigExit = 2;
constexpr int kRuntimeExit = 3;

PipelineConfig load_config(const std::string& path) {
  return path.empty() ? PipelineConfig{} : PipelineConfig::load(path);
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"voxmend: 48 kHz speech restoration and enhancement"};
  app.require_subcommand(1);

  auto* enhance = app.add_subcommand("enhance", "Enhance a WAV file");
  std::string in_path, out_path, config_path, stage;
  bool no_agc = false, stream = false;
  enhance->add_option("--in", in_path, "Input WAV")->required();
  enhance->add_option("--out", out_path, "Output WAV")->required();
  enhance->add_option("--config", config_path, "key=value config file");
  enhance->add_option("--stage", stage, "both | restore | enhance");
  enhance->add_flag("--no-agc", no_agc, "Disable the level adjustment");
  enhance->add_flag("--stream", stream, "Process chunk by chunk");

  auto* bench = app.add_subcommand("bench", "Single-thread real-time factor");
  double seconds = 10;
  bench->add_option("--config", config_path, "key=value config file");
  bench->add_option("--seconds", seconds, "Synthetic input length");

  auto* train_cmd = app.add_subcommand("train", "Train a stage on a manifest");
  std::string train_stage, manifest, out_dir, generator;
  TrainHyper hyper;
  train_cmd->add_option("--stage", train_stage, "restoration | enhancement")->required();
  train_cmd->add_option("--manifest", manifest, "JSON-lines manifest")->required();
  train_cmd->add_option("--out", out_dir, "Checkpoint directory")->required();
  train_cmd->add_option("--steps", hyper.steps, "Total steps");
  train_cmd->add_option("--lr", hyper.lr, "Learning rate");
  train_cmd->add_option("--batch", hyper.batch, "Batch size");
  train_cmd->add_option("--seed", hyper.seed, "Seed");
  train_cmd->add_option("--checkpoint-every", hyper.checkpoint_every, "Checkpoint interval");
  train_cmd->add_option("--segment", hyper.segment_seconds, "Segment length in seconds");
  train_cmd->add_option("--generator-channels", hyper.generator_channels, "Generator width");
  train_cmd->add_option("--enhancement-channels", hyper.enhancement_channels, "Enhancement width");
  train_cmd->add_option("--generator", generator, "Restoration checkpoint feeding the enhancement stage");

  auto* dataset = app.add_subcommand("make-dataset", "Simulate degraded/target pairs");
  std::size_t pairs = 0;
  std::uint64_t seed = 0;
  dataset->add_option("--manifest", manifest, "Source manifest")->required();
  dataset->add_option("--out", out_dir, "Output directory")->required();
  dataset->add_option("--pairs", pairs, "Number of pairs")->required();
  dataset->add_option("--seed", seed, "Seed");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : kConfigExit;
  }

  try {
    if (enhance->parsed()) {
      auto cfg = load_config(config_path);
      if (!stage.empty()) cfg.stage = parse_stage(stage);
      if (no_agc) cfg.agc = false;
      const auto r = enhance_file(in_path, out_path, cfg, stream);
      std::cout << r.to_text();
    } else if (bench->parsed()) {
      const auto r = benchmark_rtf(load_config(config_path), seconds);
      std::cout << r.to_text();
    } else if (train_cmd->parsed()) {
      hyper.generator_checkpoint = generator;
      const auto s = parse_train_stage(train_stage);
      const auto entries = sim::read_manifest(manifest);
      const auto r = train(s, entries, out_dir, hyper);
      std::cout << "steps " << r.start_step << " -> " << r.end_step << "\nloss_csv " << r.loss_csv.string() << "\n";
      for (const auto& c : r.checkpoints) std::cout << "checkpoint " << c.string() << "\n";
    } else if (dataset->parsed()) {
      const auto entries = sim::read_manifest(manifest);
      const auto r = make_dataset(entries, out_dir, pairs, seed);
      for (const auto& w : r.warnings) std::cerr << "warning: " << w << "\n";
      std::cout << "pairs " << r.written << "\nmanifest " << r.manifest.string() << "\n";
    }
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return kConfigExit;
  } catch (const ParseError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return kConfigExit;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kRuntimeExit;
  }
  return 0;
}
