#include "csepose/diff/params.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <sstream>

#include "csepose/core/kvtext.hpp"

namespace csepose::diff {

static_assert(std::endian::native == std::endian::little,
              "checkpoint blobs are little-endian; big-endian hosts are unsupported");

std::size_t ParamStore::add(const std::string& name, const std::string& group, NdArray init) {
  if (index_.count(name)) throw std::invalid_argument("ParamStore: duplicate parameter '" + name + "'");
  index_[name] = entries_.size();
  entries_.push_back(Entry{name, group, std::move(init)});
  return entries_.size() - 1;
}

std::size_t ParamStore::index_of(const std::string& name) const {
  auto it = index_.find(name);
  if (it == index_.end()) throw std::invalid_argument("ParamStore: unknown parameter '" + name + "'");
  return it->second;
}

std::int64_t ParamStore::total_scalars() const {
  std::int64_t n = 0;
  for (const auto& e : entries_) n += e.value.numel();
  return n;
}

namespace {
constexpr char kMagic[] = "csepose-params v1";
constexpr char kBlobSep[] = "---BLOB---";
}  // namespace

void ParamStore::save(const std::string& path) const {
  std::ostringstream head;
  head << kMagic << "\n";
  head << "count = " << entries_.size() << "\n";
  std::int64_t offset = 0;
  for (const auto& e : entries_) {
    const std::int64_t bytes = e.value.numel() * static_cast<std::int64_t>(sizeof(double));
    head << "param = " << e.name << " | " << e.group << " |";
    for (auto d : e.value.shape) head << " " << d;
    head << " | " << offset << " " << bytes << "\n";
    offset += bytes;
  }
  head << "blob_bytes = " << offset << "\n";
  head << kBlobSep << "\n";

  std::ofstream f(path, std::ios::binary);
  if (!f) throw std::runtime_error("ParamStore: cannot write " + path);
  const std::string h = head.str();
  f.write(h.data(), static_cast<std::streamsize>(h.size()));
  for (const auto& e : entries_) {
    f.write(reinterpret_cast<const char*>(e.value.data.data()),
            static_cast<std::streamsize>(e.value.data.size() * sizeof(double)));
  }
  if (!f) throw std::runtime_error("ParamStore: write failed for " + path);
}

ParamStore ParamStore::load(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw std::runtime_error("ParamStore: cannot open " + path);
  std::string line;
  if (!std::getline(f, line) || line != kMagic) {
    throw std::runtime_error("ParamStore: bad magic in " + path);
  }

  struct Rec {
    std::string name, group;
    Shape shape;
    std::int64_t offset = 0, bytes = 0;
  };
  std::vector<Rec> recs;
  std::int64_t count = -1, blob_bytes = -1;
  while (std::getline(f, line)) {
    if (line == kBlobSep) break;
    std::istringstream in(line);
    std::string key;
    in >> key;
    if (key == "count") {
      std::string eq;
      in >> eq >> count;
    } else if (key == "blob_bytes") {
      std::string eq;
      in >> eq >> blob_bytes;
    } else if (key == "param") {
      // param = name | group | d0 d1 ... | offset bytes
      const std::string rest = line.substr(line.find('=') + 1);
      std::vector<std::string> fields;
      std::size_t start = 0;
      while (true) {
        std::size_t bar = rest.find('|', start);
        fields.push_back(rest.substr(start, bar == std::string::npos ? bar : bar - start));
        if (bar == std::string::npos) break;
        start = bar + 1;
      }
      if (fields.size() != 4) throw std::runtime_error("ParamStore: malformed param line: " + line);
      auto trim = [](std::string s) {
        const auto a = s.find_first_not_of(' ');
        const auto b = s.find_last_not_of(' ');
        return a == std::string::npos ? std::string() : s.substr(a, b - a + 1);
      };
      Rec r;
      r.name = trim(fields[0]);
      r.group = trim(fields[1]);
      std::istringstream sh(fields[2]);
      std::int64_t d;
      while (sh >> d) r.shape.push_back(d);
      std::istringstream ob(fields[3]);
      ob >> r.offset >> r.bytes;
      recs.push_back(std::move(r));
    } else {
      throw std::runtime_error("ParamStore: unexpected manifest line: " + line);
    }
  }
  if (count != static_cast<std::int64_t>(recs.size())) {
    throw std::runtime_error("ParamStore: manifest count mismatch in " + path);
  }
  std::vector<char> blob(static_cast<std::size_t>(blob_bytes));
  f.read(blob.data(), blob_bytes);
  if (f.gcount() != blob_bytes) throw std::runtime_error("ParamStore: truncated blob in " + path);

  ParamStore store;
  for (const auto& r : recs) {
    NdArray v = NdArray::zeros(r.shape);
    if (r.bytes != v.numel() * static_cast<std::int64_t>(sizeof(double)) ||
        r.offset + r.bytes > blob_bytes) {
      throw std::runtime_error("ParamStore: blob range mismatch for '" + r.name + "'");
    }
    std::memcpy(v.data.data(), blob.data() + r.offset, static_cast<std::size_t>(r.bytes));
    store.add(r.name, r.group, std::move(v));
  }
  return store;
}

}  // namespace csepose::diff
