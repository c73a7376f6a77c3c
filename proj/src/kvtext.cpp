#include "csepose/core/kvtext.hpp"

#include <charconv>
#include <cstdio>
#include <fstream>
#include <sstream>

namespace csepose {

namespace {

std::string trim(const std::string& s) {
  std::size_t a = s.find_first_not_of(" \t\r\n");
  if (a == std::string::npos) return "";
  std::size_t b = s.find_last_not_of(" \t\r\n");
  return s.substr(a, b - a + 1);
}

}  // namespace

std::string format_double(double v) {
  // %.17g always round-trips; try shorter forms first for readable files.
  char buf[64];
  for (int prec = 6; prec <= 17; ++prec) {
    std::snprintf(buf, sizeof(buf), "%.*g", prec, v);
    double back = 0.0;
    std::sscanf(buf, "%lf", &back);
    if (back == v) break;
  }
  return buf;
}

void KvText::set(const std::string& key, const std::string& value) {
  if (!map_.count(key)) order_.push_back(key);
  map_[key] = value;
}

void KvText::set_double(const std::string& key, double v) { set(key, format_double(v)); }

void KvText::set_int(const std::string& key, std::int64_t v) { set(key, std::to_string(v)); }

const std::string& KvText::get(const std::string& key) const {
  auto it = map_.find(key);
  if (it == map_.end()) throw std::runtime_error("kvtext: missing key '" + key + "'");
  return it->second;
}

std::string KvText::get_or(const std::string& key, const std::string& fallback) const {
  auto it = map_.find(key);
  return it == map_.end() ? fallback : it->second;
}

double KvText::get_double(const std::string& key) const {
  const std::string& s = get(key);
  try {
    std::size_t pos = 0;
    double v = std::stod(s, &pos);
    if (pos != s.size()) throw std::invalid_argument(s);
    return v;
  } catch (const std::exception&) {
    throw std::runtime_error("kvtext: key '" + key + "' is not a number: '" + s + "'");
  }
}

double KvText::get_double_or(const std::string& key, double fallback) const {
  return has(key) ? get_double(key) : fallback;
}

std::int64_t KvText::get_int(const std::string& key) const {
  const std::string& s = get(key);
  std::int64_t v = 0;
  auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc{} || ptr != s.data() + s.size()) {
    throw std::runtime_error("kvtext: key '" + key + "' is not an integer: '" + s + "'");
  }
  return v;
}

std::int64_t KvText::get_int_or(const std::string& key, std::int64_t fallback) const {
  return has(key) ? get_int(key) : fallback;
}

std::string KvText::serialize() const {
  std::ostringstream out;
  for (const auto& k : order_) out << k << " = " << map_.at(k) << "\n";
  return out.str();
}

KvText KvText::parse(const std::string& text) {
  KvText kv;
  std::istringstream in(text);
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    std::string t = trim(line);
    if (t.empty() || t[0] == '#') continue;
    std::size_t eq = t.find('=');
    if (eq == std::string::npos) {
      throw std::runtime_error("kvtext: line " + std::to_string(lineno) + " has no '=': " + t);
    }
    kv.set(trim(t.substr(0, eq)), trim(t.substr(eq + 1)));
  }
  return kv;
}

KvText KvText::load(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw std::runtime_error("kvtext: cannot open " + path);
  std::ostringstream ss;
  ss << f.rdbuf();
  return parse(ss.str());
}

void KvText::save(const std::string& path) const {
  std::ofstream f(path, std::ios::binary);
  if (!f) throw std::runtime_error("kvtext: cannot write " + path);
  f << serialize();
}

}  // namespace csepose
