#include "sgkit/config.hpp"

#include <cstdlib>
#include <fstream>
#include <sstream>

namespace sgkit {

namespace {

std::string trim(std::string_view s) {
  std::size_t b = 0;
  std::size_t e = s.size();
  while (b < e && std::isspace(static_cast<unsigned char>(s[b]))) ++b;
  while (e > b && std::isspace(static_cast<unsigned char>(s[e - 1]))) --e;
  return std::string(s.substr(b, e - b));
}

}  // namespace

Expected<KvConfig, ConfigError> KvConfig::parse(std::string_view text) {
  KvConfig config;
  std::istringstream in{std::string(text)};
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    std::string stripped = trim(line);
    if (stripped.empty() || stripped[0] == '#') continue;
    std::size_t eq = stripped.find('=');
    if (eq == std::string::npos) {
      return ConfigError{"line " + std::to_string(line_no) + ": expected key = value"};
    }
    std::string key = trim(std::string_view(stripped).substr(0, eq));
    std::string value = trim(std::string_view(stripped).substr(eq + 1));
    if (key.empty()) {
      return ConfigError{"line " + std::to_string(line_no) + ": empty key"};
    }
    config.values_[key] = value;
  }
  return config;
}

Expected<KvConfig, ConfigError> KvConfig::load(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) return ConfigError{"cannot open config: " + path};
  std::ostringstream buf;
  buf << in.rdbuf();
  return parse(buf.str());
}

std::string KvConfig::get(const std::string& key, std::string fallback) const {
  auto it = values_.find(key);
  return it == values_.end() ? fallback : it->second;
}

std::int64_t KvConfig::get_int(const std::string& key, std::int64_t fallback) const {
  auto it = values_.find(key);
  if (it == values_.end()) return fallback;
  char* end = nullptr;
  long long v = std::strtoll(it->second.c_str(), &end, 10);
  return (end == it->second.c_str() || *end != '\0') ? fallback : v;
}

double KvConfig::get_double(const std::string& key, double fallback) const {
  auto it = values_.find(key);
  if (it == values_.end()) return fallback;
  char* end = nullptr;
  double v = std::strtod(it->second.c_str(), &end);
  return (end == it->second.c_str() || *end != '\0') ? fallback : v;
}

std::string KvConfig::canonical_text() const {
  std::ostringstream out;
  for (const auto& [key, value] : values_) out << key << " = " << value << "\n";
  return out.str();
}

}  // namespace sgkit
