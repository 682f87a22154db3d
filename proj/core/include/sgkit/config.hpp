#pragma once

// Flat key-value run configuration: one `key = value` per line, '#'
// comments. Secrets never live here; keys name the environment variable
// that holds them.

#include <cstdint>
#include <map>
#include <optional>
#include <string>

#include "sgkit/expected.hpp"

namespace sgkit {

struct ConfigError {
  std::string message;
};

class KvConfig {
 public:
  KvConfig() = default;

  static Expected<KvConfig, ConfigError> parse(std::string_view text);
  static Expected<KvConfig, ConfigError> load(const std::string& path);

  bool has(const std::string& key) const { return values_.count(key) > 0; }
  std::string get(const std::string& key, std::string fallback = "") const;
  std::int64_t get_int(const std::string& key, std::int64_t fallback) const;
  double get_double(const std::string& key, double fallback) const;

  void set(const std::string& key, std::string value) { values_[key] = std::move(value); }
  const std::map<std::string, std::string>& values() const { return values_; }

  // Canonical text form (sorted keys); hashed into run manifests.
  std::string canonical_text() const;

 private:
  std::map<std::string, std::string> values_;
};

}  // namespace sgkit
