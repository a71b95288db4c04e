#include <CLI11.hpp>

#include <cstdlib>
#include <iostream>

#include "lenslearn/errors.hpp"
#include "lenslearn/pipeline.hpp"

namespace {

using lenslearn::Config;
namespace pipeline = lenslearn::pipeline;

struct Common {
  std::string config_path;
  std::vector<std::string> overrides;
  std::string out;
  std::string seed;
};

void add_common(CLI::App* cmd, Common& c) {
  cmd->add_option("-c,--config", c.config_path, "INI config file");
  cmd->add_option("-s,--set", c.overrides, "override, section.key=value (repeatable)")->allow_extra_args(false);
  cmd->add_option("-o,--out", c.out, "output directory (run.out)");
  cmd->add_option("--seed", c.seed, "master seed (run.seed)");
}

Config build_config(const Common& c, const std::vector<std::pair<std::string, std::string>>& extra) {
  Config cfg;
  if (!c.config_path.empty()) cfg.merge_file(c.config_path);
  for (const auto& [k, v] : extra) {
    if (!v.empty()) cfg.set(k, v);
  }
  if (!c.out.empty()) cfg.set("run.out", c.out);
  if (!c.seed.empty()) cfg.set("run.seed", c.seed);
  for (const auto& o : c.overrides) cfg.assign(o);
  if (const char* env = std::getenv("LENSLEARN_THREADS")) cfg.set("run.threads", env);
  cfg.count("run.threads");
  return cfg;
}

void print(const pipeline::CommandResult& r) {
  std::cout << "outputs in " << r.out_dir.string() << "\n";
  for (const auto& [k, v] : r.metrics) std::cout << "  " << k << " = " << v << "\n";
  for (const auto& p : r.problems) std::cerr << "problem: " << p << "\n";
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"lenslearn: simulated see-through camera, reconstruction and classification"};
  app.require_subcommand(0, 1);

  Common prep_c, sim_c, recon_c, clf_c, report_c;
  std::string dataset, images, labels, packed;
  std::string prepared, simulated, recon_run, route;
  bool check_linearity = false;
  std::vector<std::string> run_dirs;

  auto* prep = app.add_subcommand("prepare", "subsample, pad and split a dataset into packed train/test files");
  add_common(prep, prep_c);
  prep->add_option("--dataset", dataset, "mnist6 | emnist | kanji49");
  prep->add_option("--images", images, "IDX image file");
  prep->add_option("--labels", labels, "IDX label file");
  prep->add_option("--packed", packed, "LLDS file instead of IDX");

  auto* sim = app.add_subcommand("simulate", "render sensor captures of a prepared dataset");
  add_common(sim, sim_c);
  sim->add_option("--prepared", prepared, "prepare output directory");
  sim->add_flag("--check-linearity", check_linearity, "run the superposition check");

  auto* recon = app.add_subcommand("train-recon", "train the reconstruction u-net");
  add_common(recon, recon_c);
  recon->add_option("--prepared", prepared, "prepare output directory");
  recon->add_option("--simulated", simulated, "simulate output directory");

  auto* clf = app.add_subcommand("train-clf", "train a classifier on one route");
  add_common(clf, clf_c);
  clf->add_option("--route", route, "original | raw | reconstructed");
  clf->add_option("--prepared", prepared, "prepare output directory");
  clf->add_option("--simulated", simulated, "simulate output directory");
  clf->add_option("--recon-run", recon_run, "train-recon output directory (reconstructed route)");

  auto* rep = app.add_subcommand("report", "grids, confusion maps and summary tables from finished runs");
  add_common(rep, report_c);
  rep->add_option("runs", run_dirs, "run directories")->required();

  bool list_keys = false;
  app.add_flag("--list-keys", list_keys, "print every config key with its default and exit");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return 2;
  }

  if (list_keys) {
    for (const auto& k : lenslearn::config_schema()) {
      std::cout << k.key << " = " << k.default_value << "    # " << k.help << "\n";
    }
    return 0;
  }
  if (app.get_subcommands().empty()) {
    std::cerr << app.help();
    return 2;
  }

  try {
    pipeline::CommandResult result;
    if (prep->parsed()) {
      auto cfg = build_config(prep_c, {{"data.name", dataset}, {"data.images", images}, {"data.labels", labels},
                                       {"data.packed", packed}});
      result = pipeline::prepare(cfg);
    } else if (sim->parsed()) {
      auto cfg = build_config(sim_c, {{"inputs.prepared", prepared}, {"optics.check_linearity",
                                                                      check_linearity ? "true" : ""}});
      result = pipeline::simulate(cfg);
    } else if (recon->parsed()) {
      auto cfg = build_config(recon_c, {{"inputs.prepared", prepared}, {"inputs.simulated", simulated}});
      result = pipeline::train_recon(cfg);
    } else if (clf->parsed()) {
      auto cfg = build_config(clf_c, {{"classifier.route", route},
                                      {"inputs.prepared", prepared},
                                      {"inputs.simulated", simulated},
                                      {"inputs.recon_run", recon_run}});
      result = pipeline::train_clf(cfg);
    } else if (rep->parsed()) {
      auto cfg = build_config(report_c, {});
      std::vector<std::filesystem::path> dirs(run_dirs.begin(), run_dirs.end());
      result = pipeline::report(cfg, dirs);
      print(result);
      return result.problems.empty() ? 0 : 3;
    }
    print(result);
    return 0;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return pipeline::exit_code(e);
  }
}
