#pragma once

// File IO: PFM (portable float map) read/write and PNG 8/16-bit read/write.
//
// PFM layout: "PF" (3 channel) or "Pf" (1 channel) magic, a "width height"
// line, a scale line whose sign encodes endianness (negative = little), then
// float32 rows bottom-up. Written files are little-endian with scale -1.
// In-memory ImageGrid row 0 is the TOP image row; readers/writers flip.
//
// PNG goes through libpng. Reads return raw integer samples (as doubles) plus
// the bit depth so normalize_intensities can map to [0,1]; palette images are
// expanded to RGB, alpha is stripped, sub-8-bit gray is widened.

#include <bit>
#include <cctype>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <filesystem>
#include <memory>
#include <string>
#include <vector>

#include <png.h>

#include "pstereo/core.hpp"

namespace pstereo {

namespace detail {

inline float byteswap_f32(float v) {
  std::uint32_t u;
  std::memcpy(&u, &v, 4);
  u = ((u & 0x000000FFu) << 24) | ((u & 0x0000FF00u) << 8) |
      ((u & 0x00FF0000u) >> 8) | ((u & 0xFF000000u) >> 24);
  std::memcpy(&v, &u, 4);
  return v;
}

inline constexpr bool host_little_endian() {
  return std::endian::native == std::endian::little;
}

struct FileCloser {
  void operator()(std::FILE* f) const {
    if (f) std::fclose(f);
  }
};
using FilePtr = std::unique_ptr<std::FILE, FileCloser>;

// Reads one whitespace-delimited token, skipping comments is not part of PFM.
inline std::string pfm_token(std::FILE* f, const std::string& path) {
  std::string tok;
  int c;
  while ((c = std::fgetc(f)) != EOF && std::isspace(c)) {
  }
  if (c == EOF) throw IoError("malformed PFM header (truncated): " + path);
  do {
    tok.push_back(static_cast<char>(c));
  } while ((c = std::fgetc(f)) != EOF && !std::isspace(c));
  return tok;
}

}  // namespace detail

// ---------------------------------------------------------------------------
// PFM
// ---------------------------------------------------------------------------

inline ImageGrid read_pfm(const std::string& path) {
  detail::FilePtr f(std::fopen(path.c_str(), "rb"));
  if (!f) throw IoError("cannot open PFM: " + path);

  std::string magic = detail::pfm_token(f.get(), path);
  int channels;
  if (magic == "PF")
    channels = 3;
  else if (magic == "Pf")
    channels = 1;
  else
    throw IoError("malformed PFM header (bad magic '" + magic + "'): " + path);

  auto parse_int = [&](const std::string& tok) {
    std::size_t pos = 0;
    int v = 0;
    try {
      v = std::stoi(tok, &pos);
    } catch (...) {
      throw IoError("malformed PFM header (bad dimension '" + tok + "'): " + path);
    }
    if (pos != tok.size() || v <= 0)
      throw IoError("malformed PFM header (bad dimension '" + tok + "'): " + path);
    return v;
  };
  int width = parse_int(detail::pfm_token(f.get(), path));
  int height = parse_int(detail::pfm_token(f.get(), path));

  std::string scale_tok = detail::pfm_token(f.get(), path);
  double scale = 0.0;
  try {
    std::size_t pos = 0;
    scale = std::stod(scale_tok, &pos);
    if (pos != scale_tok.size()) throw IoError("");
  } catch (...) {
    throw IoError("malformed PFM header (bad scale '" + scale_tok + "'): " + path);
  }
  if (scale == 0.0) throw IoError("malformed PFM header (zero scale): " + path);
  const bool file_little = scale < 0.0;

  ImageGrid img(width, height, channels);
  std::vector<float> row(static_cast<std::size_t>(width) * channels);
  for (int y = height - 1; y >= 0; --y) {  // file rows are bottom-up
    if (std::fread(row.data(), sizeof(float), row.size(), f.get()) != row.size())
      throw IoError("truncated PFM data: " + path);
    for (int x = 0; x < width; ++x)
      for (int c = 0; c < channels; ++c) {
        float v = row[static_cast<std::size_t>(x) * channels + c];
        if (file_little != detail::host_little_endian()) v = detail::byteswap_f32(v);
        img.at(x, y, c) = static_cast<double>(v);
      }
  }
  return img;
}

inline void write_pfm(const std::string& path, const ImageGrid& img) {
  if (img.empty()) throw IoError("write_pfm: empty image");
  if (img.channels() != 1 && img.channels() != 3)
    throw IoError("write_pfm: channels must be 1 or 3");
  detail::FilePtr f(std::fopen(path.c_str(), "wb"));
  if (!f) throw IoError("cannot create PFM: " + path);
  std::fprintf(f.get(), "%s\n%d %d\n-1.0\n", img.channels() == 3 ? "PF" : "Pf",
               img.width(), img.height());
  std::vector<float> row(static_cast<std::size_t>(img.width()) * img.channels());
  for (int y = img.height() - 1; y >= 0; --y) {
    for (int x = 0; x < img.width(); ++x)
      for (int c = 0; c < img.channels(); ++c) {
        float v = static_cast<float>(img.at(x, y, c));
        if (!detail::host_little_endian()) v = detail::byteswap_f32(v);
        row[static_cast<std::size_t>(x) * img.channels() + c] = v;
      }
    if (std::fwrite(row.data(), sizeof(float), row.size(), f.get()) != row.size())
      throw IoError("write failed: " + path);
  }
  if (std::fflush(f.get()) != 0) throw IoError("write failed: " + path);
}

// ---------------------------------------------------------------------------
// PNG
// ---------------------------------------------------------------------------

struct PngImage {
  ImageGrid raw;  // integer samples as doubles, 1 or 3 channels
  int bit_depth = 8;
};

inline PngImage read_png(const std::string& path) {
  detail::FilePtr f(std::fopen(path.c_str(), "rb"));
  if (!f) throw IoError("cannot open PNG: " + path);

  png_byte sig[8];
  if (std::fread(sig, 1, 8, f.get()) != 8 || png_sig_cmp(sig, 0, 8) != 0)
    throw IoError("not a PNG file: " + path);

  png_structp png = png_create_read_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
  if (!png) throw IoError("libpng init failed");
  png_infop info = png_create_info_struct(png);
  if (!info) {
    png_destroy_read_struct(&png, nullptr, nullptr);
    throw IoError("libpng init failed");
  }
  std::vector<png_bytep> row_ptrs;
  std::vector<png_byte> pixels;
  if (setjmp(png_jmpbuf(png))) {
    png_destroy_read_struct(&png, &info, nullptr);
    throw IoError("corrupt PNG: " + path);
  }
  png_init_io(png, f.get());
  png_set_sig_bytes(png, 8);
  png_read_info(png, info);

  png_uint_32 width = png_get_image_width(png, info);
  png_uint_32 height = png_get_image_height(png, info);
  int bit_depth = png_get_bit_depth(png, info);
  int color_type = png_get_color_type(png, info);

  if (color_type == PNG_COLOR_TYPE_PALETTE) png_set_palette_to_rgb(png);
  if (color_type == PNG_COLOR_TYPE_GRAY && bit_depth < 8)
    png_set_expand_gray_1_2_4_to_8(png);
  if (png_get_valid(png, info, PNG_INFO_tRNS)) png_set_tRNS_to_alpha(png);
  png_set_strip_alpha(png);
  if (bit_depth == 16 && detail::host_little_endian()) png_set_swap(png);

  png_read_update_info(png, info);
  bit_depth = png_get_bit_depth(png, info);
  color_type = png_get_color_type(png, info);
  int channels = png_get_channels(png, info);
  if ((channels != 1 && channels != 3) || (bit_depth != 8 && bit_depth != 16)) {
    png_destroy_read_struct(&png, &info, nullptr);
    throw IoError("unsupported PNG layout: " + path);
  }

  std::size_t rowbytes = png_get_rowbytes(png, info);
  pixels.assign(rowbytes * height, 0);
  row_ptrs.resize(height);
  for (png_uint_32 y = 0; y < height; ++y) row_ptrs[y] = pixels.data() + y * rowbytes;
  png_read_image(png, row_ptrs.data());
  png_read_end(png, nullptr);
  png_destroy_read_struct(&png, &info, nullptr);

  PngImage out;
  out.bit_depth = bit_depth;
  out.raw = ImageGrid(static_cast<int>(width), static_cast<int>(height), channels);
  for (png_uint_32 y = 0; y < height; ++y) {
    const png_byte* row = pixels.data() + y * rowbytes;
    for (png_uint_32 x = 0; x < width; ++x)
      for (int c = 0; c < channels; ++c) {
        std::size_t i = (static_cast<std::size_t>(x) * channels + c);
        double v;
        if (bit_depth == 8) {
          v = row[i];
        } else {
          std::uint16_t s;
          std::memcpy(&s, row + i * 2, 2);
          v = s;
        }
        out.raw.at(static_cast<int>(x), static_cast<int>(y), c) = v;
      }
  }
  return out;
}

// Writes values in [0,1] quantized to the requested bit depth (8 or 16).
inline void write_png(const std::string& path, const ImageGrid& img, int bit_depth = 16) {
  if (bit_depth != 8 && bit_depth != 16) throw IoError("write_png: bit depth must be 8 or 16");
  if (img.channels() != 1 && img.channels() != 3)
    throw IoError("write_png: channels must be 1 or 3");
  detail::FilePtr f(std::fopen(path.c_str(), "wb"));
  if (!f) throw IoError("cannot create PNG: " + path);

  png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
  if (!png) throw IoError("libpng init failed");
  png_infop info = png_create_info_struct(png);
  if (!info) {
    png_destroy_write_struct(&png, nullptr);
    throw IoError("libpng init failed");
  }
  std::vector<png_byte> row;
  if (setjmp(png_jmpbuf(png))) {
    png_destroy_write_struct(&png, &info);
    throw IoError("PNG write failed: " + path);
  }
  png_init_io(png, f.get());
  png_set_IHDR(png, info, img.width(), img.height(), bit_depth,
               img.channels() == 3 ? PNG_COLOR_TYPE_RGB : PNG_COLOR_TYPE_GRAY,
               PNG_INTERLACE_NONE, PNG_COMPRESSION_TYPE_DEFAULT, PNG_FILTER_TYPE_DEFAULT);
  png_write_info(png, info);
  if (bit_depth == 16 && detail::host_little_endian()) png_set_swap(png);

  const double maxv = bit_depth == 8 ? 255.0 : 65535.0;
  const std::size_t samples = static_cast<std::size_t>(img.width()) * img.channels();
  row.assign(samples * (bit_depth / 8), 0);
  for (int y = 0; y < img.height(); ++y) {
    for (int x = 0; x < img.width(); ++x)
      for (int c = 0; c < img.channels(); ++c) {
        double q = std::round(clamp01(img.at(x, y, c)) * maxv);
        std::size_t i = static_cast<std::size_t>(x) * img.channels() + c;
        if (bit_depth == 8) {
          row[i] = static_cast<png_byte>(q);
        } else {
          std::uint16_t s = static_cast<std::uint16_t>(q);
          std::memcpy(row.data() + i * 2, &s, 2);
        }
      }
    png_write_row(png, row.data());
  }
  png_write_end(png, nullptr);
  png_destroy_write_struct(&png, &info);
}

// Reads an image by extension: .pfm returns floats as stored; .png returns
// samples normalized to [0,1].
inline ImageGrid read_image_normalized(const std::string& path) {
  std::string ext = std::filesystem::path(path).extension().string();
  for (auto& ch : ext) ch = static_cast<char>(std::tolower(ch));
  if (ext == ".pfm") return read_pfm(path);
  if (ext == ".png") {
    PngImage p = read_png(path);
    return normalize_intensities(p.raw, p.bit_depth);
  }
  throw IoError("unsupported image extension: " + path);
}

}  // namespace pstereo
