#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <string_view>

namespace sdnguard {

/// Declarative `key = value` settings. Lines starting with '#' are comments.
/// Every consumer marks the keys it reads so leftovers can be reported as
/// unknown (a typo in a config file should never be silently ignored).
class KvConfig {
 public:
  KvConfig() = default;

  static KvConfig parse(std::string_view text, std::string_view origin = "<string>");
  static KvConfig load(const std::filesystem::path& path);

  /// Apply a `key=value` override (as passed via `--set`).
  void set(std::string_view assignment);
  void set(const std::string& key, const std::string& value);

  bool contains(const std::string& key) const { return values_.contains(key); }
  std::optional<std::string> raw(const std::string& key) const;

  std::string get_string(const std::string& key, const std::string& fallback) const;
  double get_double(const std::string& key, double fallback) const;
  std::int64_t get_int(const std::string& key, std::int64_t fallback) const;
  bool get_bool(const std::string& key, bool fallback) const;

  /// Keys that were present but never read.
  std::set<std::string> unused_keys() const;
  /// Fails with a configuration error listing unused keys.
  void require_all_used() const;

  const std::map<std::string, std::string>& values() const { return values_; }

  /// Canonical `key=value\n` rendering (sorted by key), used for hashing.
  std::string canonical() const;
  /// 16-hex-digit FNV-1a digest of canonical().
  std::string hash() const;

 private:
  std::map<std::string, std::string> values_;
  mutable std::set<std::string> used_;
};

}  // namespace sdnguard
