#include "lenslearn/config.hpp"

#include <algorithm>
#include <boost/property_tree/ini_parser.hpp>
#include <boost/property_tree/ptree.hpp>
#include <charconv>
#include <sstream>

#include "lenslearn/errors.hpp"
#include "lenslearn/io.hpp"

namespace lenslearn {

const std::vector<ConfigKey>& config_schema() {
  static const std::vector<ConfigKey> schema = {
      {"run.seed", "1", "master seed; all stream seeds derive from it"},
      {"run.out", "runs/out", "output directory of the subcommand"},
      {"run.threads", "1", "worker cap (LENSLEARN_THREADS overrides)"},
      {"run.timing", "false", "write wall-clock seconds into metrics CSVs"},
      {"run.verbose", "true", "print per-epoch progress to stderr"},

      {"data.name", "mnist6", "mnist6 | emnist | kanji49"},
      {"data.images", "", "IDX image file (gzip accepted)"},
      {"data.labels", "", "IDX label file (gzip accepted)"},
      {"data.packed", "", "LLDS file used instead of the IDX pair"},
      {"data.target_per_class", "1000", "mnist6 items per class"},
      {"data.train_fraction", "0.9", "train share of the split"},
      {"data.object_size", "32", "images are zero-padded to this square size"},

      {"inputs.prepared", "", "output directory of prepare"},
      {"inputs.simulated", "", "output directory of simulate"},
      {"inputs.recon_run", "", "output directory of train-recon (reconstructed route)"},

      {"optics.sensor_h", "125", "sensor rows"},
      {"optics.sensor_w", "170", "sensor columns"},
      {"optics.distance_mm", "250", "object distance, metadata only"},
      {"optics.smoothing_sigma", "1.0", "blur of each pixel response, sensor pixels"},
      {"optics.speckle_density", "0.02", "lit fraction of a raw response"},
      {"optics.noise_floor", "0.02", "positive floor of every response"},
      {"optics.neighbor_coupling", "0.5", "weight of neighbouring responses"},
      {"optics.seed", "1", "operator seed"},
      {"optics.read_noise_sigma", "0.01", "per-frame read noise"},
      {"optics.frames", "10", "frames averaged per capture"},
      {"optics.check_linearity", "false", "run the superposition check"},

      {"recon.size", "128", "square input/output size of the U-Net"},
      {"recon.target_noise_variance", "0.001", "Gaussian noise added to training targets"},
      {"recon.depth", "4", "encoder stages"},
      {"recon.base_channels", "16", "channels of the first stage"},
      {"recon.residual", "true", "identity skip inside dense blocks"},
      {"recon.init_seed", "1", "weight initialisation seed"},
      {"recon.epochs", "50", "training epochs"},
      {"recon.batch_size", "32", "minibatch size"},
      {"recon.lr", "0.001", "Adam learning rate"},
      {"recon.checkpoint_every", "10", "epochs between checkpoints (0 = none)"},
      {"recon.preview_samples", "4", "samples per split kept for the report grids"},

      {"classifier.route", "original", "original | raw | reconstructed"},
      {"classifier.width_multiplier", "0.25", "scales every stage width"},
      {"classifier.init_seed", "1", "weight initialisation seed"},
      {"classifier.epochs", "30", "training epochs"},
      {"classifier.batch_size", "32", "minibatch size"},
      {"classifier.lr", "0.001", "Adam learning rate"},
      {"classifier.checkpoint_every", "10", "epochs between checkpoints (0 = none)"},
      {"classifier.raw_h", "125", "raw route input rows"},
      {"classifier.raw_w", "170", "raw route input columns"},
      {"classifier.original_h", "32", "original and reconstructed route rows"},
      {"classifier.original_w", "32", "original and reconstructed route columns"},

      {"report.samples", "4", "rows per reconstruction grid"},
      {"report.gutter", "4", "white pixels between grid cells"},
  };
  return schema;
}

Config::Config() {
  for (const auto& k : config_schema()) values_[k.key] = k.default_value;
}

Config Config::from_file(const std::filesystem::path& path) {
  Config c;
  c.merge_file(path);
  return c;
}

void Config::merge_file(const std::filesystem::path& path) {
  std::vector<std::uint8_t> bytes;
  try {
    bytes = read_file(path);
  } catch (const Error& e) {
    throw ConfigError(std::string("cannot read config: ") + e.what());
  }
  merge_text(std::string(bytes.begin(), bytes.end()), path.string());
}

void Config::merge_text(const std::string& text, const std::string& source) {
  boost::property_tree::ptree tree;
  std::istringstream in(text);
  try {
    boost::property_tree::ini_parser::read_ini(in, tree);
  } catch (const boost::property_tree::ini_parser_error& e) {
    throw ConfigError(source + ":" + std::to_string(e.line()) + ": " + e.message());
  }
  for (const auto& [section, body] : tree) {
    if (body.empty()) {
      throw ConfigError(source + ": key '" + section + "' must sit inside a [section]");
    }
    for (const auto& [name, value] : body) {
      try {
        set(section + "." + name, value.get_value<std::string>());
      } catch (const ConfigError& e) {
        throw ConfigError(source + ": " + e.what());
      }
    }
  }
}

void Config::set(const std::string& key, const std::string& value) {
  auto it = values_.find(key);
  if (it == values_.end()) throw ConfigError("unknown config key '" + key + "'");
  it->second = value;
}

void Config::assign(const std::string& assignment) {
  const auto eq = assignment.find('=');
  if (eq == std::string::npos) throw ConfigError("expected key=value, got '" + assignment + "'");
  auto trim = [](std::string s) {
    const auto b = s.find_first_not_of(" \t");
    const auto e = s.find_last_not_of(" \t");
    return b == std::string::npos ? std::string() : s.substr(b, e - b + 1);
  };
  set(trim(assignment.substr(0, eq)), trim(assignment.substr(eq + 1)));
}

const std::string& Config::get(const std::string& key) const {
  auto it = values_.find(key);
  if (it == values_.end()) throw ConfigError("unknown config key '" + key + "'");
  return it->second;
}

double Config::real(const std::string& key) const {
  const auto& s = get(key);
  double v = 0;
  const auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc() || ptr != s.data() + s.size()) {
    throw ConfigError(key + ": '" + s + "' is not a number");
  }
  return v;
}

std::uint64_t Config::u64(const std::string& key) const {
  const auto& s = get(key);
  std::uint64_t v = 0;
  const auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc() || ptr != s.data() + s.size() || s.empty()) {
    throw ConfigError(key + ": '" + s + "' is not a non-negative integer");
  }
  return v;
}

std::size_t Config::count(const std::string& key) const { return static_cast<std::size_t>(u64(key)); }

bool Config::flag(const std::string& key) const {
  const auto& s = get(key);
  if (s == "true" || s == "1" || s == "yes") return true;
  if (s == "false" || s == "0" || s == "no") return false;
  throw ConfigError(key + ": '" + s + "' is not a boolean");
}

std::filesystem::path Config::path(const std::string& key) const { return get(key); }

std::vector<std::pair<std::string, std::string>> Config::entries() const {
  std::vector<std::pair<std::string, std::string>> out;
  for (const auto& k : config_schema()) out.emplace_back(k.key, values_.at(k.key));
  return out;
}

std::string Config::to_ini() const {
  std::string out, section;
  for (const auto& [key, value] : entries()) {
    const auto dot = key.find('.');
    const auto sec = key.substr(0, dot);
    if (sec != section) {
      if (!section.empty()) out += "\n";
      out += "[" + sec + "]\n";
      section = sec;
    }
    out += key.substr(dot + 1) + " = " + value + "\n";
  }
  return out;
}

}  // namespace lenslearn
