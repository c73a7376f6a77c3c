#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

namespace csepose {

// Flat "key = value" text records with dotted keys. Used for run configs,
// dataset manifests and pose/metric records. Lines starting with '#' and
// blank lines are ignored. Keys keep file order for stable round-trips.
class KvText {
 public:
  void set(const std::string& key, const std::string& value);
  void set_double(const std::string& key, double v);
  void set_int(const std::string& key, std::int64_t v);

  bool has(const std::string& key) const { return map_.count(key) > 0; }
  const std::string& get(const std::string& key) const;
  std::string get_or(const std::string& key, const std::string& fallback) const;
  double get_double(const std::string& key) const;
  double get_double_or(const std::string& key, double fallback) const;
  std::int64_t get_int(const std::string& key) const;
  std::int64_t get_int_or(const std::string& key, std::int64_t fallback) const;

  const std::vector<std::string>& keys() const { return order_; }

  std::string serialize() const;
  static KvText parse(const std::string& text);
  static KvText load(const std::string& path);
  void save(const std::string& path) const;

 private:
  std::map<std::string, std::string> map_;
  std::vector<std::string> order_;
};

std::string format_double(double v);  // round-trip exact, shortest-ish

}  // namespace csepose
