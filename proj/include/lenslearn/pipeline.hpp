#pragma once

#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include "lenslearn/config.hpp"
#include "lenslearn/dataset.hpp"
#include "lenslearn/optics.hpp"

// Subcommands behind the command-line tool. Each one reads a Config, writes
// its outputs plus manifest.json into run.out, and throws on failure after
// recording the error in the manifest.
namespace lenslearn::pipeline {

struct CommandResult {
  std::filesystem::path out_dir;
  std::vector<std::string> messages;  // human-readable progress lines
  std::map<std::string, double> metrics;
  std::map<std::string, std::string> tags;  // dataset name, route, ...
  std::vector<std::string> problems;  // report: skipped inputs
};

// Named sub-stream of run.seed, e.g. seed_for(cfg, "split").
std::uint64_t seed_for(const Config& cfg, const std::string& stream);

optics::OpticsConfig optics_config(const Config& cfg, std::size_t object_h, std::size_t object_w);

CommandResult prepare(const Config& cfg);
CommandResult simulate(const Config& cfg);
CommandResult train_recon(const Config& cfg);
CommandResult train_clf(const Config& cfg);
CommandResult report(const Config& cfg, const std::vector<std::filesystem::path>& run_dirs);

// Classifier inputs for a route, built from the prepare/simulate/train-recon
// outputs named in cfg.inputs.*. Returns {train, test}.
std::pair<data::LabeledImageSet, data::LabeledImageSet> route_sets(const Config& cfg, data::Route route);

// 2 config, 3 data, 4 numeric, 1 anything else.
int exit_code(const std::exception& e);

}  // namespace lenslearn::pipeline
