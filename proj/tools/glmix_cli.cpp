#include <iostream>

#include "CLI11.hpp"

#include "glmix/experiment.hpp"

int main(int argc, char** argv) {
  CLI::App app{"glmix - correlation decay for global observables on skew-product extensions"};
  app.set_version_flag("--version", std::string(glmix::cli::kVersion));
  app.require_subcommand(1);

  std::string config, out, plots;
  std::uint64_t seed = 0;
  std::vector<std::string> sets;

  auto add_common = [&](CLI::App* sub) {
    sub->add_option("--config", config, "JSON config file")->check(CLI::ExistingFile);
    sub->add_option("--set", sets, "override a config field: dotted.key=value (repeatable)");
  };
  auto* run = app.add_subcommand("run", "run the experiment described by the config");
  add_common(run);
  run->add_option("--out", out, "output directory");
  run->add_option("--seed", seed, "base seed (u64)");
  run->add_option("--plots", plots, "emit SVG plots")->check(CLI::IsMember({"on", "off"}));
  auto* val = app.add_subcommand("validate", "parse and check a config without running it");
  add_common(val);
  app.add_subcommand("list-presets", "list the built-in systems and observables");

  CLI11_PARSE(app, argc, argv);

  try {
    if (app.got_subcommand("list-presets")) {
      std::cout << glmix::cli::list_presets();
      return 0;
    }
    auto cfg = glmix::cli::load_config(config, sets);
    if (run->parsed()) {
      if (!out.empty()) cfg["output"]["dir"] = out;
      if (run->count("--seed")) cfg["experiment"]["seed"] = seed;
      if (!plots.empty()) cfg["output"]["plots"] = (plots == "on");
    }
    if (val->parsed()) {
      glmix::cli::validate(cfg);
      std::cout << "config ok\n";
      return 0;
    }
    auto res = glmix::cli::run(cfg);
    for (auto it = res.manifest["verdicts"].begin(); it != res.manifest["verdicts"].end(); ++it)
      std::cout << it.value().get<std::string>() << "  " << it.key() << "\n";
    std::cout << "wrote " << cfg["output"]["dir"].get<std::string>() << "/manifest.json\n";
    return res.exit_code;
  } catch (const glmix::Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 3;
  }
}
