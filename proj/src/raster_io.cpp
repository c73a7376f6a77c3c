#include "csepose/render/raster_io.hpp"

#include <cstdint>
#include <cstring>
#include <fstream>

namespace csepose::render {

namespace {

std::uint8_t to_byte(double v) {
  return static_cast<std::uint8_t>(std::lround(std::clamp(v, 0.0, 1.0) * 255.0));
}

void expect(bool ok, const std::string& msg) {
  if (!ok) throw std::runtime_error(msg);
}

std::ifstream open_in(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  expect(static_cast<bool>(f), "raster_io: cannot open " + path);
  return f;
}

std::ofstream open_out(const std::string& path) {
  std::ofstream f(path, std::ios::binary);
  expect(static_cast<bool>(f), "raster_io: cannot write " + path);
  return f;
}

}  // namespace

void write_ppm(const diff::NdArray& rgb, const std::string& path) {
  expect(rgb.rank() == 3 && rgb.shape[2] == 3, "write_ppm: expects [h,w,3]");
  auto f = open_out(path);
  f << "P6\n" << rgb.shape[1] << " " << rgb.shape[0] << "\n255\n";
  std::vector<std::uint8_t> row(static_cast<std::size_t>(rgb.shape[1]) * 3);
  for (std::int64_t r = 0; r < rgb.shape[0]; ++r) {
    for (std::int64_t i = 0; i < rgb.shape[1] * 3; ++i) {
      row[static_cast<std::size_t>(i)] = to_byte(rgb[(r * rgb.shape[1]) * 3 + i]);
    }
    f.write(reinterpret_cast<const char*>(row.data()), static_cast<std::streamsize>(row.size()));
  }
}

namespace {

diff::NdArray read_pnm(const std::string& path, bool rgb) {
  auto f = open_in(path);
  std::string magic;
  f >> magic;
  expect(magic == (rgb ? "P6" : "P5"), "read_pnm: bad magic in " + path);
  std::int64_t w = 0, h = 0, maxval = 0;
  f >> w >> h >> maxval;
  expect(w > 0 && h > 0 && maxval == 255, "read_pnm: unsupported header in " + path);
  f.get();  // single whitespace after header
  const std::int64_t ch = rgb ? 3 : 1;
  std::vector<std::uint8_t> buf(static_cast<std::size_t>(w * h * ch));
  f.read(reinterpret_cast<char*>(buf.data()), static_cast<std::streamsize>(buf.size()));
  expect(f.gcount() == static_cast<std::streamsize>(buf.size()), "read_pnm: truncated " + path);
  diff::NdArray out = rgb ? diff::NdArray::zeros({h, w, 3}) : diff::NdArray::zeros({h, w});
  for (std::int64_t i = 0; i < out.numel(); ++i) out[i] = buf[static_cast<std::size_t>(i)] / 255.0;
  return out;
}

}  // namespace

diff::NdArray read_ppm(const std::string& path) { return read_pnm(path, true); }

void write_pgm(const diff::NdArray& gray, const std::string& path) {
  expect(gray.rank() == 2, "write_pgm: expects [h,w]");
  auto f = open_out(path);
  f << "P5\n" << gray.shape[1] << " " << gray.shape[0] << "\n255\n";
  std::vector<std::uint8_t> buf(static_cast<std::size_t>(gray.numel()));
  for (std::int64_t i = 0; i < gray.numel(); ++i) buf[static_cast<std::size_t>(i)] = to_byte(gray[i]);
  f.write(reinterpret_cast<const char*>(buf.data()), static_cast<std::streamsize>(buf.size()));
}

diff::NdArray read_pgm(const std::string& path) { return read_pnm(path, false); }

void write_depth(const diff::NdArray& depth, const std::string& path) {
  expect(depth.rank() == 2, "write_depth: expects [h,w]");
  auto f = open_out(path);
  const std::uint32_t h = static_cast<std::uint32_t>(depth.shape[0]);
  const std::uint32_t w = static_cast<std::uint32_t>(depth.shape[1]);
  f.write(reinterpret_cast<const char*>(&h), 4);
  f.write(reinterpret_cast<const char*>(&w), 4);
  std::vector<float> buf(static_cast<std::size_t>(depth.numel()));
  for (std::int64_t i = 0; i < depth.numel(); ++i) buf[static_cast<std::size_t>(i)] = static_cast<float>(depth[i]);
  f.write(reinterpret_cast<const char*>(buf.data()), static_cast<std::streamsize>(buf.size() * 4));
}

diff::NdArray read_depth(const std::string& path) {
  auto f = open_in(path);
  std::uint32_t h = 0, w = 0;
  f.read(reinterpret_cast<char*>(&h), 4);
  f.read(reinterpret_cast<char*>(&w), 4);
  expect(h > 0 && w > 0, "read_depth: bad header in " + path);
  std::vector<float> buf(static_cast<std::size_t>(h) * w);
  f.read(reinterpret_cast<char*>(buf.data()), static_cast<std::streamsize>(buf.size() * 4));
  expect(f.gcount() == static_cast<std::streamsize>(buf.size() * 4), "read_depth: truncated " + path);
  diff::NdArray out = diff::NdArray::zeros({static_cast<std::int64_t>(h), static_cast<std::int64_t>(w)});
  for (std::int64_t i = 0; i < out.numel(); ++i) out[i] = buf[static_cast<std::size_t>(i)];
  return out;
}

}  // namespace csepose::render
