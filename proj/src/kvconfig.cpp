#include "sdnguard/kvconfig.hpp"

#include <algorithm>
#include <cctype>
#include <charconv>
#include <cstdio>
#include <fstream>
#include <sstream>

#include "sdnguard/error.hpp"
#include "sdnguard/rng.hpp"

namespace sdnguard {
namespace {

constexpr std::string_view kModule = "config";

std::string trim(std::string_view s) {
  auto begin = s.find_first_not_of(" \t\r\n");
  if (begin == std::string_view::npos) return {};
  auto end = s.find_last_not_of(" \t\r\n");
  return std::string(s.substr(begin, end - begin + 1));
}

}  // namespace

KvConfig KvConfig::parse(std::string_view text, std::string_view origin) {
  KvConfig cfg;
  std::istringstream in{std::string(text)};
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    auto body = trim(line);
    if (body.empty() || body.front() == '#') continue;
    auto eq = body.find('=');
    if (eq == std::string::npos) {
      fail(ErrorKind::Config, kModule,
           std::string(origin) + ":" + std::to_string(lineno) + ": expected key = value");
    }
    auto key = trim(std::string_view(body).substr(0, eq));
    auto value = trim(std::string_view(body).substr(eq + 1));
    if (key.empty()) {
      fail(ErrorKind::Config, kModule,
           std::string(origin) + ":" + std::to_string(lineno) + ": empty key");
    }
    cfg.values_[key] = value;
  }
  return cfg;
}

KvConfig KvConfig::load(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) fail(ErrorKind::Io, kModule, "cannot read config file " + path.string());
  std::stringstream buf;
  buf << in.rdbuf();
  return parse(buf.str(), path.string());
}

void KvConfig::set(std::string_view assignment) {
  auto eq = assignment.find('=');
  if (eq == std::string_view::npos) {
    fail(ErrorKind::Config, kModule, "override must be key=value: " + std::string(assignment));
  }
  set(trim(assignment.substr(0, eq)), trim(assignment.substr(eq + 1)));
}

void KvConfig::set(const std::string& key, const std::string& value) {
  if (key.empty()) fail(ErrorKind::Config, kModule, "empty override key");
  values_[key] = value;
}

std::optional<std::string> KvConfig::raw(const std::string& key) const {
  auto it = values_.find(key);
  if (it == values_.end()) return std::nullopt;
  used_.insert(key);
  return it->second;
}

std::string KvConfig::get_string(const std::string& key, const std::string& fallback) const {
  return raw(key).value_or(fallback);
}

double KvConfig::get_double(const std::string& key, double fallback) const {
  auto v = raw(key);
  if (!v) return fallback;
  double out = 0.0;
  auto [ptr, ec] = std::from_chars(v->data(), v->data() + v->size(), out);
  if (ec != std::errc() || ptr != v->data() + v->size()) {
    fail(ErrorKind::Config, kModule, "key '" + key + "' expects a number, got '" + *v + "'");
  }
  return out;
}

std::int64_t KvConfig::get_int(const std::string& key, std::int64_t fallback) const {
  auto v = raw(key);
  if (!v) return fallback;
  std::int64_t out = 0;
  auto [ptr, ec] = std::from_chars(v->data(), v->data() + v->size(), out);
  if (ec != std::errc() || ptr != v->data() + v->size()) {
    fail(ErrorKind::Config, kModule, "key '" + key + "' expects an integer, got '" + *v + "'");
  }
  return out;
}

bool KvConfig::get_bool(const std::string& key, bool fallback) const {
  auto v = raw(key);
  if (!v) return fallback;
  std::string lower = *v;
  std::transform(lower.begin(), lower.end(), lower.begin(),
                 [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
  if (lower == "true" || lower == "1" || lower == "yes" || lower == "on") return true;
  if (lower == "false" || lower == "0" || lower == "no" || lower == "off") return false;
  fail(ErrorKind::Config, kModule, "key '" + key + "' expects a boolean, got '" + *v + "'");
}

std::set<std::string> KvConfig::unused_keys() const {
  std::set<std::string> out;
  for (const auto& [k, v] : values_) {
    if (!used_.contains(k)) out.insert(k);
  }
  return out;
}

void KvConfig::require_all_used() const {
  auto unused = unused_keys();
  if (unused.empty()) return;
  std::string list;
  for (const auto& k : unused) list += (list.empty() ? "" : ", ") + k;
  fail(ErrorKind::Config, kModule, "unknown keys: " + list);
}

std::string KvConfig::canonical() const {
  std::string out;
  for (const auto& [k, v] : values_) out += k + "=" + v + "\n";
  return out;
}

std::string KvConfig::hash() const {
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx",
                static_cast<unsigned long long>(hash_tag(canonical())));
  return buf;
}

}  // namespace sdnguard
