// SPDX-License-Identifier: Apache-2.0
#include "hecsb/config.hpp"

#include <fstream>
#include <sstream>

namespace hecsb {
namespace {

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return "";
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

template <typename T, typename F>
T convert(const std::string& key, const std::string& text, F f) {
  try {
    std::size_t used = 0;
    T v = f(text, &used);
    if (used != text.size()) throw std::invalid_argument(text);
    return v;
  } catch (const std::exception&) {
    throw ArgumentError("config key " + key + ": cannot parse '" + text + "'");
  }
}

}  // namespace

Config Config::parse(const std::string& text, const std::string& origin) {
  Config c;
  std::istringstream in(text);
  std::string line;
  int number = 0;
  while (std::getline(in, line)) {
    ++number;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line.erase(hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos || trim(line.substr(0, eq)).empty())
      throw ArgumentError(origin + ":" + std::to_string(number) + ": expected key = value");
    c.values_[trim(line.substr(0, eq))] = trim(line.substr(eq + 1));
  }
  return c;
}

Config Config::load(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open config " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  return parse(ss.str(), path.string());
}

std::string Config::get(const std::string& key, const std::string& fallback) const {
  const auto it = values_.find(key);
  return it == values_.end() ? fallback : it->second;
}

double Config::get_double(const std::string& key, double fallback) const {
  const auto it = values_.find(key);
  if (it == values_.end()) return fallback;
  return convert<double>(key, it->second, [](const std::string& s, std::size_t* u) { return std::stod(s, u); });
}

long long Config::get_int(const std::string& key, long long fallback) const {
  const auto it = values_.find(key);
  if (it == values_.end()) return fallback;
  return convert<long long>(key, it->second,
                            [](const std::string& s, std::size_t* u) { return std::stoll(s, u); });
}

std::uint64_t Config::get_u64(const std::string& key, std::uint64_t fallback) const {
  const auto it = values_.find(key);
  if (it == values_.end()) return fallback;
  if (!it->second.empty() && it->second.front() == '-')
    throw ArgumentError("config key " + key + " must be non-negative");
  return convert<std::uint64_t>(key, it->second,
                                [](const std::string& s, std::size_t* u) { return std::stoull(s, u); });
}

std::vector<double> Config::get_list(const std::string& key, const std::vector<double>& fallback) const {
  const auto it = values_.find(key);
  if (it == values_.end()) return fallback;
  std::vector<double> out;
  std::stringstream ss(it->second);
  std::string item;
  while (std::getline(ss, item, ','))
    out.push_back(convert<double>(key, trim(item), [](const std::string& s, std::size_t* u) { return std::stod(s, u); }));
  if (out.empty()) throw ArgumentError("config key " + key + " is an empty list");
  return out;
}

}  // namespace hecsb
