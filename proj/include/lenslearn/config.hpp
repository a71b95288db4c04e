#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <utility>
#include <vector>

namespace lenslearn {

struct ConfigKey {
  std::string key;  // "section.name"
  std::string default_value;
  std::string help;
};

// Every accepted key with its default, in documentation order.
const std::vector<ConfigKey>& config_schema();

// Flat "section.key = value" settings. Files use INI sections; unknown keys
// are rejected so that typos do not silently fall back to defaults.
class Config {
 public:
  Config();

  static Config from_file(const std::filesystem::path& path);
  void merge_file(const std::filesystem::path& path);
  void merge_text(const std::string& text, const std::string& source = "config");
  void set(const std::string& key, const std::string& value);
  // "section.key=value"
  void assign(const std::string& assignment);

  const std::string& get(const std::string& key) const;
  double real(const std::string& key) const;
  std::size_t count(const std::string& key) const;
  std::uint64_t u64(const std::string& key) const;
  bool flag(const std::string& key) const;
  std::filesystem::path path(const std::string& key) const;

  std::vector<std::pair<std::string, std::string>> entries() const;
  // INI text that merge_text() reads back to the same settings.
  std::string to_ini() const;

 private:
  std::map<std::string, std::string> values_;
};

}  // namespace lenslearn
