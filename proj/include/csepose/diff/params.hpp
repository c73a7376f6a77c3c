#pragma once

#include <map>
#include <string>
#include <vector>

#include "csepose/diff/ndarray.hpp"

namespace csepose::diff {

// Named trainable arrays grouped for per-group learning rates ("main" vs
// "deform"). Storage order is insertion order and defines checkpoint layout.
class ParamStore {
 public:
  struct Entry {
    std::string name;
    std::string group;
    NdArray value;
  };

  std::size_t add(const std::string& name, const std::string& group, NdArray init);
  bool has(const std::string& name) const { return index_.count(name) > 0; }
  std::size_t index_of(const std::string& name) const;
  Entry& entry(std::size_t i) { return entries_[i]; }
  const Entry& entry(std::size_t i) const { return entries_[i]; }
  NdArray& value(const std::string& name) { return entries_[index_of(name)].value; }
  const NdArray& value(const std::string& name) const { return entries_[index_of(name)].value; }
  std::size_t size() const { return entries_.size(); }
  std::int64_t total_scalars() const;

  // Checkpoint file: text manifest (name, group, shape, byte offset/length)
  // followed by a little-endian float64 blob. Round-trips bit-exactly.
  void save(const std::string& path) const;
  static ParamStore load(const std::string& path);

 private:
  std::vector<Entry> entries_;
  std::map<std::string, std::size_t> index_;
};

}  // namespace csepose::diff
