// citemap: command-line front end for the stage pipeline.
//
//   citemap --config run.json score
//   citemap --config run.json --threads 4 all
//   citemap --config run.json sweep --margins 0,1 --hard 0,2,5
//   citemap --config run.json synth --out corpus.jsonl
//
// Exit codes: 0 success, 1 validation, 2 missing artifact, 3 internal.

#include <iostream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "citemap/pipeline.hpp"

namespace {

int run(int argc, char** argv) {
  CLI::App app{"Citation-informed document embeddings, similarity networks and science maps"};
  app.require_subcommand(1);

  std::string config_path;
  std::optional<std::uint64_t> seed;
  unsigned threads = 1;
  bool strict = false;
  app.add_option("--config", config_path, "pipeline config (JSON)")->check(CLI::ExistingFile);
  app.add_option("--seed", seed, "override the config seed");
  app.add_option("--threads", threads, "worker threads")->check(CLI::Range(1u, 1024u));
  app.add_flag("--strict", strict, "reject unknown corpus fields");

  std::vector<CLI::App*> stage_cmds;
  for (const auto& [stage, name] : citemap::stage_names()) {
    if (stage == citemap::Stage::sweep) continue;
    stage_cmds.push_back(app.add_subcommand(name, std::string("run the ") + name + " stage"));
  }
  auto* all = app.add_subcommand("all", "run every stage from score to eval");

  std::vector<double> margins;
  std::vector<int> h_values;
  auto* sweep = app.add_subcommand("sweep", "train and evaluate one model per (margin, H) pair");
  sweep->add_option("--margins", margins, "margin values (default from config)")->delimiter(',');
  sweep->add_option("--hard", h_values, "hard-negative counts (default from config)")->delimiter(',');

  std::string synth_out;
  auto* synth = app.add_subcommand("synth", "write a synthetic corpus with planted topics");
  synth->add_option("--out", synth_out, "output path (default: the config corpus path)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e) == 0 ? 0 : 1;
  }

  citemap::set_default_threads(threads);
  citemap::PipelineConfig cfg = config_path.empty() ? citemap::PipelineConfig{} : citemap::load_config(config_path);
  if (seed) cfg.seed = *seed;

  if (synth->parsed()) {
    const auto corpus = citemap::generate_synthetic_corpus(cfg.synthetic, cfg.seed);
    const auto out = synth_out.empty() ? cfg.corpus : synth_out;
    citemap::save_corpus(out, corpus);
    std::cerr << "wrote " << corpus.size() << " documents to " << out << '\n';
    return 0;
  }

  citemap::Pipeline pipeline(cfg, strict);
  if (all->parsed()) {
    for (auto stage : citemap::pipeline_stages()) {
      pipeline.run(stage);
      std::cerr << citemap::stage_name(stage) << ": done\n";
    }
    return 0;
  }
  if (sweep->parsed()) {
    pipeline.run_sweep_grid(margins.empty() ? cfg.sweep_margins : margins, h_values.empty() ? cfg.sweep_h : h_values);
    std::cerr << "sweep: done\n";
    return 0;
  }
  for (auto* cmd : stage_cmds) {
    if (!cmd->parsed()) continue;
    pipeline.run(citemap::stage_from_name(cmd->get_name()));
    std::cerr << cmd->get_name() << ": done\n";
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  try {
    return run(argc, argv);
  } catch (const citemap::MissingArtifactError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 2;
  } catch (const citemap::ValidationError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "internal error: " << e.what() << '\n';
    return 3;
  }
}
