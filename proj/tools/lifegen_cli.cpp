// lifegen: lifelong generative learning experiments.
//
//   lifegen run   --out DIR [--strategy lglvkr] [--dataset toy|mnist] ...
//   lifegen sweep --out DIR --strategies a,b,c --seeds 0,1,2 ...
//
// `run` trains one strategy over the task stream and writes per-task
// checkpoints, sample grids and metrics.csv. `sweep` runs the cross product
// of strategies and seeds into subdirectories and aggregates summary.csv.

#include <cstdio>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "lifegen/runner.hpp"

int main(int argc, char** argv) {
  CLI::App app{"lifelong generative learning experiments", "lifegen"};
  app.require_subcommand(1);

  lifegen::RunConfig run_cfg;
  if (const char* env = std::getenv("LIFEGEN_DATA")) run_cfg.data_root = env;
  CLI::App* run = app.add_subcommand("run", "train one strategy");
  lifegen::attach_options(*run, run_cfg);

  lifegen::RunConfig sweep_cfg;
  if (const char* env = std::getenv("LIFEGEN_DATA")) sweep_cfg.data_root = env;
  std::vector<std::uint64_t> seeds;
  std::vector<std::string> strategies;
  CLI::App* sweep = app.add_subcommand("sweep", "strategy x seed grid");
  lifegen::attach_options(*sweep, sweep_cfg);
  sweep->add_option("--seeds", seeds)->delimiter(',');
  sweep->add_option("--strategies", strategies)->delimiter(',');

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e);
  }

  try {
    if (*run) {
      run_cfg.validate();
      const auto rows = lifegen::execute_run(run_cfg);
      for (const auto& r : rows)
        std::printf("%s\n", lifegen::format_row(r).c_str());
    } else {
      if (seeds.empty()) seeds.push_back(sweep_cfg.seed);
      if (strategies.empty()) strategies.push_back(sweep_cfg.strategy);
      sweep_cfg.validate();
      const auto rows = lifegen::execute_sweep(sweep_cfg, seeds, strategies);
      std::printf("sweep: %zu rows -> %s/summary.csv\n", rows.size(),
                  sweep_cfg.out.c_str());
    }
  } catch (const lifegen::Error& e) {
    std::fprintf(stderr, "lifegen: %s\n", e.what());
    return 1;
  }
  return 0;
}
