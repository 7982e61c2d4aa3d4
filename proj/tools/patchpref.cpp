#include <cstdint>
#include <iostream>
#include <string>

#include "CLI11.hpp"
#include "patchpref/pipeline.hpp"

int main(int argc, char** argv) {
  CLI::App app{"patch-level preference optimization pipeline"};
  app.require_subcommand(1, 1);

  patchpref::RunOptions opts;
  std::uint64_t seed = 0;
  std::string out_dir;

  const char* commands[][2] = {
      {"gen-data", "render the scene-pair and correspondence corpora"},
      {"train-ssl", "pre-train the patch encoder and run self-supervised finetuning"},
      {"eval-spatch", "score every encoder layer by S_patch and select one"},
      {"estimate-quality", "compute patch quality maps, weight maps and heatmaps"},
      {"train-dpo", "train the denoiser under each configured objective"},
      {"evaluate", "measure region errors on held-out pairs and write the report"},
      {"all", "run every stage in order"},
      {"report", "rebuild report.csv from existing stage outputs"},
  };
  for (const auto& [name, help] : commands) {
    CLI::App* sub = app.add_subcommand(name, help);
    sub->add_option("--config", opts.config_path, "flat key = value config file");
    sub->add_option("--seed", seed, "override the master seed");
    sub->add_option("--out-dir", out_dir, "override the output directory");
    sub->add_flag("--force", opts.force, "re-run stages even when up to date");
    sub->callback([&opts, name = std::string(name)] { opts.subcommand = name; });
  }

  CLI11_PARSE(app, argc, argv);
  for (const auto* sub : app.get_subcommands()) {
    if (sub->count("--seed")) opts.seed = seed;
    if (sub->count("--out-dir")) opts.out_dir = out_dir;
  }
  return patchpref::run_command(opts, std::cout, std::cerr);
}
