// lfrg: flow | lpa | expand driven by a JSON run config

#include <CLI11.hpp>

#include <cstdio>
#include <iostream>

#include "lfrg/runner.hpp"

int main(int argc, char** argv) {
  CLI::App app{"lfrg - Lorentzian FRG workbench"};
  app.require_subcommand(1);
  std::string config, out;
  double checkpoint_every = -1;
  int order = -1;

  auto* flow = app.add_subcommand("flow", "integrate a beta-function system");
  auto* lpa = app.add_subcommand("lpa", "solve the LPA surface flow");
  auto* expand = app.add_subcommand("expand", "symbolic product / S-matrix / Bogoliubov expansion");
  for (auto* sc : {flow, lpa, expand}) {
    sc->add_option("--config", config, "JSON run config")->required()->check(CLI::ExistingFile);
    sc->add_option("--out", out, "output directory (overrides config 'out')");
  }
  lpa->add_option("--checkpoint-every", checkpoint_every, "surface checkpoint spacing in k");
  expand->add_option("--order", order, "truncation order in the couplings");

  CLI11_PARSE(app, argc, argv);
  std::string command = app.get_subcommands().front()->get_name();

  lfrg::RunConfig cfg;
  try {
    cfg = lfrg::parse_config_file(config);
    if (cfg.command != command)
      throw lfrg::SchemaError({"command: config says '" + cfg.command + "' but subcommand is '" + command + "'"});
    if (checkpoint_every >= 0) cfg.checkpoint_every = checkpoint_every;
    if (order >= 0) cfg.order = order;
    if (!out.empty()) cfg.out = out;
    if (cfg.out.empty()) throw lfrg::SchemaError({"out: required (config key or --out)"});
  } catch (const lfrg::SchemaError& e) {
    for (auto& v : e.violations()) std::cerr << "schema: " << v << "\n";
    return 2;
  }

  auto r = lfrg::run(cfg, cfg.out);
  if (r.exit_code != 0) std::cerr << "lfrg: " << r.termination << ": " << r.message << "\n";
  std::fprintf(stdout, "%s -> %s (%s)\n", command.c_str(), cfg.out.c_str(), r.termination.c_str());
  return r.exit_code;
}
