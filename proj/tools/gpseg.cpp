#include <cstdint>
#include <iostream>
#include <optional>
#include <string>

#include <CLI11.hpp>

#include "gpseg/cli.hpp"

int main(int argc, char** argv) {
  CLI::App app{"gpseg: coupled cubic elliptic system solver"};
  app.require_subcommand(1);
  std::string config;
  std::string out;
  std::uint64_t seed = 0;
  for (const auto& name : gpseg::subcommands()) {
    auto* sub = app.add_subcommand(name);
    sub->add_option("--config", config, "run configuration file")->required();
    sub->add_option("--out", out, "output directory (overrides [output] dir)");
    sub->add_option("--seed", seed, "rng seed (overrides [seed] rng_seed)");
  }
  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return gpseg::kExitConfig;
  }
  const CLI::App* sub = app.get_subcommands().front();
  std::optional<std::string> out_dir;
  std::optional<std::uint64_t> rng;
  if (sub->count("--out")) out_dir = out;
  if (sub->count("--seed")) rng = seed;
  return gpseg::run_file(sub->get_name(), config, out_dir, rng, std::cerr);
}
