#pragma once

#include <filesystem>
#include <functional>
#include <map>
#include <string>
#include <vector>

#include "scn/checks.hpp"
#include "scn/data.hpp"
#include "scn/network.hpp"
#include "scn/train.hpp"

namespace scn {

// Flat dotted-key configuration resolved in layers: built-in defaults, then
// a preset, then a key = value file, then command-line overrides. Every
// value is validated when it is set; unknown keys are rejected.
class RunConfig {
 public:
  RunConfig();

  static std::vector<std::string> presets();
  void apply_preset(const std::string& name);

  // Lines "key = value"; '#' starts a comment; "[section]" prefixes the
  // keys that follow with "section.".
  void load_file(const std::filesystem::path& path);

  // The key may be written in full or as a unique dotted suffix
  // ("iterations" for "train.iterations").
  void set(const std::string& key, const std::string& value);
  std::string resolve_key(const std::string& key) const;

  const std::string& get(const std::string& key) const;
  std::int64_t get_int(const std::string& key) const;
  double get_double(const std::string& key) const;
  bool get_bool(const std::string& key) const;
  std::vector<int> get_ints(const std::string& key) const;

  std::vector<std::string> keys() const;
  // Every key and its resolved value, one "key = value" per line.
  std::string dump() const;
  // Writes dump() to dir/config.txt.
  void echo(const std::filesystem::path& dir) const;

  ModelConfig model() const;
  SynthSpec synth() const;
  TrainConfig train() const;
  Protocol protocol() const;
  GradCheckSuiteConfig gradcheck() const;

 private:
  struct Entry {
    std::string value;
    std::function<void(const std::string&)> check;  // throws ConfigError
  };
  std::map<std::string, Entry> entries_;

  void define(const std::string& key, std::string value,
              std::function<void(const std::string&)> check);
};

bool parse_bool(const std::string& s);
std::vector<int> parse_int_list(const std::string& s);

}  // namespace scn
