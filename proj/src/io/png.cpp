#include "ddflow/io/png.hpp"

#include <png.h>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <memory>
#include <stdexcept>

namespace ddflow {
namespace {

struct FileCloser {
  void operator()(std::FILE* f) const { std::fclose(f); }
};
using FilePtr = std::unique_ptr<std::FILE, FileCloser>;

FilePtr open_file(const std::string& path, const char* mode) {
  FilePtr f(std::fopen(path.c_str(), mode));
  if (!f) throw std::runtime_error("cannot open " + path);
  return f;
}

[[noreturn]] void png_fail(png_structp png, png_const_charp msg) {
  (void)png;
  throw std::runtime_error(std::string("png: ") + msg);
}

void png_warn(png_structp, png_const_charp) {}

Image read_ppm(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open " + path);
  std::string magic;
  in >> magic;
  if (magic != "P6") throw std::runtime_error(path + ": not a binary PPM");
  auto next_int = [&]() {
    in >> std::ws;
    while (in.peek() == '#') {
      std::string comment;
      std::getline(in, comment);
      in >> std::ws;
    }
    long v = -1;
    in >> v;
    if (!in || v <= 0) throw std::runtime_error(path + ": malformed PPM header");
    return v;
  };
  const long w = next_int(), h = next_int(), maxval = next_int();
  if (maxval > 65535) throw std::runtime_error(path + ": PPM maxval out of range");
  in.get();
  const bool wide = maxval > 255;
  const std::size_t n = std::size_t(w * h * 3);
  std::vector<unsigned char> buf(n * (wide ? 2 : 1));
  in.read(reinterpret_cast<char*>(buf.data()), std::streamsize(buf.size()));
  if (in.gcount() != std::streamsize(buf.size())) throw std::runtime_error(path + ": truncated PPM data");
  Image img(3, h, w);
  for (long y = 0; y < h; ++y)
    for (long x = 0; x < w; ++x)
      for (long c = 0; c < 3; ++c) {
        const std::size_t i = std::size_t((y * w + x) * 3 + c);
        const double s = wide ? double(buf[2 * i] << 8 | buf[2 * i + 1]) : double(buf[i]);
        img.at(c, y, x) = float(s / double(maxval));
      }
  return img;
}

Image to_grayscale_mean(const Image& img) {
  if (img.channels() == 1) return img;
  Image out(1, img.height(), img.width());
  const Index n = img.plane();
  out.values() = (img.values().segment(0, n) + img.values().segment(n, n) + img.values().segment(2 * n, n)) / 3.0f;
  return out;
}

}  // namespace

RawImage read_png_raw(const std::string& path) {
  FilePtr f = open_file(path, "rb");
  unsigned char sig[8];
  if (std::fread(sig, 1, 8, f.get()) != 8 || png_sig_cmp(sig, 0, 8) != 0) {
    throw std::runtime_error(path + ": not a PNG file");
  }
  png_structp png = png_create_read_struct(PNG_LIBPNG_VER_STRING, nullptr, png_fail, png_warn);
  if (!png) throw std::runtime_error("png: out of memory");
  png_infop info = png_create_info_struct(png);
  struct Guard {
    png_structp* p;
    png_infop* i;
    ~Guard() { png_destroy_read_struct(p, i, nullptr); }
  } guard{&png, &info};

  png_init_io(png, f.get());
  png_set_sig_bytes(png, 8);
  png_read_info(png, info);
  const int color = png_get_color_type(png, info);
  const int depth = png_get_bit_depth(png, info);
  if (color == PNG_COLOR_TYPE_PALETTE) png_set_palette_to_rgb(png);
  if (color == PNG_COLOR_TYPE_GRAY && depth < 8) png_set_expand_gray_1_2_4_to_8(png);
  if (png_get_valid(png, info, PNG_INFO_tRNS)) png_set_tRNS_to_alpha(png);
  if (depth == 16) png_set_swap(png);  // little-endian host samples
  png_read_update_info(png, info);

  RawImage raw;
  raw.width = png_get_image_width(png, info);
  raw.height = png_get_image_height(png, info);
  raw.channels = png_get_channels(png, info);
  raw.bit_depth = png_get_bit_depth(png, info);
  const std::size_t rowbytes = png_get_rowbytes(png, info);
  std::vector<unsigned char> data(rowbytes * std::size_t(raw.height));
  std::vector<png_bytep> rows(std::size_t(raw.height));
  for (Index y = 0; y < raw.height; ++y) rows[std::size_t(y)] = data.data() + std::size_t(y) * rowbytes;
  png_read_image(png, rows.data());
  png_read_end(png, nullptr);

  const std::size_t n = std::size_t(raw.width * raw.height * raw.channels);
  raw.samples.resize(n);
  for (Index y = 0; y < raw.height; ++y) {
    const unsigned char* row = rows[std::size_t(y)];
    for (Index i = 0; i < raw.width * raw.channels; ++i) {
      const std::size_t k = std::size_t(y * raw.width * raw.channels + i);
      raw.samples[k] = raw.bit_depth == 16 ? std::uint16_t(row[2 * i] | row[2 * i + 1] << 8) : row[i];
    }
  }
  return raw;
}

void write_png_raw(const std::string& path, const RawImage& raw) {
  if (raw.bit_depth != 8 && raw.bit_depth != 16) throw std::invalid_argument("write_png: bit depth must be 8 or 16");
  int color = 0;
  switch (raw.channels) {
    case 1: color = PNG_COLOR_TYPE_GRAY; break;
    case 2: color = PNG_COLOR_TYPE_GRAY_ALPHA; break;
    case 3: color = PNG_COLOR_TYPE_RGB; break;
    case 4: color = PNG_COLOR_TYPE_RGBA; break;
    default: throw std::invalid_argument("write_png: 1 to 4 channels supported");
  }
  if (raw.samples.size() != std::size_t(raw.width * raw.height * raw.channels)) {
    throw std::invalid_argument("write_png: sample count does not match extents");
  }
  FilePtr f = open_file(path, "wb");
  png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, png_fail, png_warn);
  if (!png) throw std::runtime_error("png: out of memory");
  png_infop info = png_create_info_struct(png);
  struct Guard {
    png_structp* p;
    png_infop* i;
    ~Guard() { png_destroy_write_struct(p, i); }
  } guard{&png, &info};

  png_init_io(png, f.get());
  png_set_IHDR(png, info, png_uint_32(raw.width), png_uint_32(raw.height), raw.bit_depth, color,
               PNG_INTERLACE_NONE, PNG_COMPRESSION_TYPE_DEFAULT, PNG_FILTER_TYPE_DEFAULT);
  png_write_info(png, info);
  const std::size_t per_row = std::size_t(raw.width * raw.channels);
  std::vector<unsigned char> row(per_row * (raw.bit_depth == 16 ? 2 : 1));
  for (Index y = 0; y < raw.height; ++y) {
    for (std::size_t i = 0; i < per_row; ++i) {
      const std::uint16_t s = raw.samples[std::size_t(y) * per_row + i];
      if (raw.bit_depth == 16) {
        row[2 * i] = static_cast<unsigned char>(s >> 8);
        row[2 * i + 1] = static_cast<unsigned char>(s & 0xff);
      } else {
        row[i] = static_cast<unsigned char>(std::min<std::uint16_t>(s, 255));
      }
    }
    png_write_row(png, row.data());
  }
  png_write_end(png, nullptr);
}

Image read_image(const std::string& path) {
  {
    std::ifstream probe(path, std::ios::binary);
    if (!probe) throw std::runtime_error("cannot open " + path);
    char m[2] = {0, 0};
    probe.read(m, 2);
    if (m[0] == 'P' && m[1] == '6') return read_ppm(path);
  }
  const RawImage raw = read_png_raw(path);
  const double scale = raw.bit_depth == 16 ? 65535.0 : 255.0;
  const Index colors = raw.channels >= 3 ? 3 : 1;
  Image img(colors, raw.height, raw.width);
  for (Index y = 0; y < raw.height; ++y)
    for (Index x = 0; x < raw.width; ++x)
      for (Index c = 0; c < colors; ++c) {
        img.at(c, y, x) = float(raw.samples[std::size_t((y * raw.width + x) * raw.channels + c)] / scale);
      }
  return img;
}

void write_png(const std::string& path, const Image& img) {
  if (img.channels() != 1 && img.channels() != 3) throw std::invalid_argument("write_png: expected 1 or 3 channels");
  RawImage raw;
  raw.width = img.width();
  raw.height = img.height();
  raw.channels = img.channels();
  raw.samples.resize(std::size_t(img.values().size()));
  for (Index y = 0; y < img.height(); ++y)
    for (Index x = 0; x < img.width(); ++x)
      for (Index c = 0; c < img.channels(); ++c) {
        const float v = std::clamp(img.at(c, y, x), 0.0f, 1.0f);
        raw.samples[std::size_t((y * img.width() + x) * img.channels() + c)] =
            std::uint16_t(std::lround(v * 255.0f));
      }
  write_png_raw(path, raw);
}

void write_png(const std::string& path, const OcclusionMap& occ) {
  RawImage raw;
  raw.width = occ.width();
  raw.height = occ.height();
  raw.channels = 1;
  raw.samples.resize(std::size_t(occ.size()));
  for (Index i = 0; i < occ.size(); ++i) raw.samples[std::size_t(i)] = occ[i] ? 255 : 0;
  write_png_raw(path, raw);
}

OcclusionMap read_occlusion_png(const std::string& path) {
  const Image img = to_grayscale_mean(read_image(path));
  OcclusionMap occ(img.height(), img.width());
  for (Index y = 0; y < img.height(); ++y)
    for (Index x = 0; x < img.width(); ++x) occ.set(y, x, img.at(0, y, x) > 0.5f);
  return occ;
}

}  // namespace ddflow
