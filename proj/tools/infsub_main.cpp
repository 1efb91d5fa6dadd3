#include <exception>
#include <iostream>
#include <string>

#include <CLI11.hpp>

#include "infsub/stream_io.hpp"

int main(int argc, char** argv) {
  CLI::App app{
      "Maintains, per keyword subscription, an approximately optimal size-k "
      "set of influencers over a social action stream with exponential "
      "time decay."};

  infsub::RunConfig config;
  std::string pruning3 = config.pruning3 ? "on" : "off";

  app.add_option("--actions", config.actions_path,
                 "Actions file, one JSON object per line")
      ->required();
  app.add_option("--profiles", config.profiles_path,
                 "User profiles file, one JSON object per line");
  app.add_option("--subscriptions", config.subscriptions_path,
                 "Subscriptions file, one JSON object per line");
  app.add_option("--output", config.output_path,
                 "Result CSV path; stats land next to it as <output>.stats.json")
      ->required();
  app.add_option("--k", config.params.k, "Result set size per subscription");
  app.add_option("--lambda", config.params.lambda,
                 "Exponential time-decay rate");
  app.add_option("--epsilon", config.params.epsilon,
                 "Approximation knob in (0, 0.5); smaller is tighter but "
                 "tracks more candidate sets");
  app.add_option("--tau-f", config.params.tau_f,
                 "Raw influence ceiling that triggers a rebase");
  app.add_option("--tau-d", config.params.tau_d,
                 "Smallest influence worth distinguishing (diagnostics)");
  app.add_option("--emit-every", config.cadence.every,
                 "Emit results every N actions (0 disables the counter)");
  app.add_flag("--emit-on-ts-change", config.cadence.on_ts_change,
               "Also emit whenever the stream clock advances");
  app.add_option("--pruning3", pruning3,
                 "Bound-based subtree pruning during the marginal DFS")
      ->check(CLI::IsMember({"on", "off"}));
  app.add_option("--engine", config.engine,
                 "prefix (production), naive (per-subscription reference), or "
                 "eager (rebase-every-timestamp reference)")
      ->check(CLI::IsMember({"prefix", "naive", "eager"}));

  CLI11_PARSE(app, argc, argv);
  config.pruning3 = pruning3 == "on";

  try {
    const infsub::RunStats stats = infsub::run(config, &std::cerr);
    std::cerr << "processed " << stats.actions_processed << " actions ("
              << stats.lines_skipped << " lines skipped), " << stats.emissions
              << " emissions, " << stats.counters.rebases << " rebases, "
              << static_cast<long long>(stats.actions_per_second)
              << " actions/s\n";
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
  return 0;
}
