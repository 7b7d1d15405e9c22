#include "sonargen/image_io.hpp"

#include <png.h>

#include <csetjmp>
#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <memory>
#include <sstream>
#include <vector>

namespace sonargen {

namespace {

struct WriteTarget {
  std::string* bytes;
};

void write_to_string(png_structp png, png_bytep data, png_size_t n) {
  auto* t = static_cast<WriteTarget*>(png_get_io_ptr(png));
  t->bytes->append(reinterpret_cast<const char*>(data), n);
}

void flush_noop(png_structp) {}

void png_warn(png_structp, png_const_charp) {}

// Encodes rows of `bit_depth` grayscale samples.
std::string encode(int width, int height, int bit_depth, const std::vector<png_bytep>& rows) {
  std::string bytes;
  png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, png_warn);
  if (!png) throw IoError("png: cannot create writer");
  png_infop info = png_create_info_struct(png);
  WriteTarget target{&bytes};
  if (setjmp(png_jmpbuf(png))) {
    png_destroy_write_struct(&png, &info);
    throw IoError("png: encode failed");
  }
  png_set_write_fn(png, &target, write_to_string, flush_noop);
  png_set_IHDR(png, info, png_uint_32(width), png_uint_32(height), bit_depth, PNG_COLOR_TYPE_GRAY,
               PNG_INTERLACE_NONE, PNG_COMPRESSION_TYPE_DEFAULT, PNG_FILTER_TYPE_DEFAULT);
  png_write_info(png, info);
  if (bit_depth == 16) png_set_swap(png);  // host little-endian -> PNG big-endian
  png_write_image(png, const_cast<png_bytepp>(rows.data()));
  png_write_end(png, nullptr);
  png_destroy_write_struct(&png, &info);
  return bytes;
}

struct ReadSource {
  const std::string* bytes;
  size_t offset;
};

void read_from_string(png_structp png, png_bytep out, png_size_t n) {
  auto* s = static_cast<ReadSource*>(png_get_io_ptr(png));
  if (s->offset + n > s->bytes->size()) png_error(png, "truncated data");
  std::copy_n(s->bytes->data() + s->offset, n, reinterpret_cast<char*>(out));
  s->offset += n;
}

struct Decoded {
  int width = 0, height = 0, bit_depth = 0;
  std::vector<unsigned char> pixels;  // row-major, native-endian samples
};

Decoded decode(const std::string& bytes, const std::string& what) {
  if (bytes.size() < 8 || png_sig_cmp(reinterpret_cast<png_const_bytep>(bytes.data()), 0, 8) != 0)
    throw IoError("not a PNG file: " + what);
  png_structp png = png_create_read_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, png_warn);
  if (!png) throw IoError("png: cannot create reader");
  png_infop info = png_create_info_struct(png);
  ReadSource src{&bytes, 0};
  Decoded d;
  std::vector<png_bytep> rows;
  bool gray = true;
  if (setjmp(png_jmpbuf(png))) {
    png_destroy_read_struct(&png, &info, nullptr);
    throw IoError("corrupt PNG: " + what);
  }
  png_set_read_fn(png, &src, read_from_string);
  png_read_info(png, info);
  d.width = int(png_get_image_width(png, info));
  d.height = int(png_get_image_height(png, info));
  d.bit_depth = png_get_bit_depth(png, info);
  gray = png_get_color_type(png, info) == PNG_COLOR_TYPE_GRAY;
  if (gray) {
    if (d.bit_depth < 8) png_set_expand_gray_1_2_4_to_8(png);
    if (d.bit_depth == 16) png_set_swap(png);
    png_read_update_info(png, info);
    d.bit_depth = std::max(d.bit_depth, 8);
    const size_t stride = size_t(d.width) * size_t(d.bit_depth / 8);
    d.pixels.resize(stride * size_t(d.height));
    rows.resize(size_t(d.height));
    for (int r = 0; r < d.height; ++r) rows[size_t(r)] = d.pixels.data() + size_t(r) * stride;
    png_read_image(png, rows.data());
    png_read_end(png, nullptr);
  }
  png_destroy_read_struct(&png, &info, nullptr);
  if (!gray) throw IoError("expected grayscale PNG: " + what);
  return d;
}

}  // namespace

void quantize16(Image& image) {
  image = (image.array().max(0.0f).min(1.0f) * 65535.0f).round() / 65535.0f;
}

std::string encode_png16(const Image& image) {
  const int h = int(image.rows()), w = int(image.cols());
  std::vector<std::uint16_t> buf(size_t(h) * size_t(w));
  for (Eigen::Index i = 0; i < image.size(); ++i) {
    const float v = std::clamp(image.data()[i], 0.0f, 1.0f);
    buf[size_t(i)] = static_cast<std::uint16_t>(std::lround(v * 65535.0f));
  }
  std::vector<png_bytep> rows(static_cast<size_t>(h));
  for (int r = 0; r < h; ++r) rows[size_t(r)] = reinterpret_cast<png_bytep>(buf.data() + size_t(r) * size_t(w));
  return encode(w, h, 16, rows);
}

void write_png16(const std::filesystem::path& path, const Image& image) {
  write_file_atomic(path, encode_png16(image));
}

Image read_png16(const std::filesystem::path& path) {
  const auto d = decode(read_file(path), path.string());
  Image out(d.height, d.width);
  if (d.bit_depth == 16) {
    const auto* p = reinterpret_cast<const std::uint16_t*>(d.pixels.data());
    for (Eigen::Index i = 0; i < out.size(); ++i) out.data()[i] = float(p[i]) / 65535.0f;
  } else {
    for (Eigen::Index i = 0; i < out.size(); ++i) out.data()[i] = float(d.pixels[size_t(i)]) / 255.0f;
  }
  return out;
}

void write_png8(const std::filesystem::path& path, const LabelGrid& labels) {
  const int h = int(labels.rows()), w = int(labels.cols());
  std::vector<png_bytep> rows(static_cast<size_t>(h));
  for (int r = 0; r < h; ++r) rows[size_t(r)] = const_cast<png_bytep>(labels.data() + size_t(r) * size_t(w));
  write_file_atomic(path, encode(w, h, 8, rows));
}

LabelGrid read_png8(const std::filesystem::path& path) {
  const auto d = decode(read_file(path), path.string());
  if (d.bit_depth != 8) throw IoError("expected 8-bit label PNG: " + path.string());
  LabelGrid out(d.height, d.width);
  std::copy(d.pixels.begin(), d.pixels.end(), out.data());
  return out;
}

void write_file_atomic(const std::filesystem::path& path, const std::string& bytes) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  auto tmp = path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot write " + tmp.string());
    out.write(bytes.data(), std::streamsize(bytes.size()));
    if (!out) throw IoError("short write " + tmp.string());
  }
  std::error_code ec;
  std::filesystem::rename(tmp, path, ec);
  if (ec) throw IoError("cannot rename into " + path.string() + ": " + ec.message());
}

std::string read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

}  // namespace sonargen
