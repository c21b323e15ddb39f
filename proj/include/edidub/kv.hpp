#pragma once

#include <istream>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include "edidub/errors.hpp"

namespace edidub {

using KeyValues = std::vector<std::pair<std::string, std::vector<std::string>>>;

/// "key value value ..." per line; blank lines and lines starting with '#'
/// are skipped.
inline KeyValues read_key_values(std::istream& is) {
  KeyValues out;
  std::string line;
  while (std::getline(is, line)) {
    std::istringstream ls(line);
    std::string key;
    if (!(ls >> key) || key[0] == '#') continue;
    std::vector<std::string> values;
    for (std::string v; ls >> v;) values.push_back(v);
    out.emplace_back(std::move(key), std::move(values));
  }
  return out;
}

inline const std::string& kv_single(const std::string& key, const std::vector<std::string>& values) {
  if (values.size() != 1) throw ConfigError("key '" + key + "' expects exactly one value");
  return values.front();
}

inline long kv_long(const std::string& key, const std::vector<std::string>& values) {
  const std::string& v = kv_single(key, values);
  try {
    size_t used = 0;
    const long x = std::stol(v, &used);
    if (used == v.size()) return x;
  } catch (const std::exception&) {
  }
  throw ConfigError("key '" + key + "' expects an integer, got '" + v + "'");
}

inline int kv_int(const std::string& key, const std::vector<std::string>& values) {
  return static_cast<int>(kv_long(key, values));
}

inline double kv_double(const std::string& key, const std::vector<std::string>& values) {
  const std::string& v = kv_single(key, values);
  try {
    size_t used = 0;
    const double x = std::stod(v, &used);
    if (used == v.size()) return x;
  } catch (const std::exception&) {
  }
  throw ConfigError("key '" + key + "' expects a number, got '" + v + "'");
}

inline bool kv_bool(const std::string& key, const std::vector<std::string>& values) {
  const std::string& v = kv_single(key, values);
  if (v == "1" || v == "true") return true;
  if (v == "0" || v == "false") return false;
  throw ConfigError("key '" + key + "' expects true or false, got '" + v + "'");
}

inline std::vector<int> kv_ints(const std::string& key, const std::vector<std::string>& values) {
  std::vector<int> out;
  for (const auto& v : values) out.push_back(kv_int(key, {v}));
  return out;
}

}  // namespace edidub
