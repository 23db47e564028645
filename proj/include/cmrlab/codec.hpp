#pragma once

// PGM (binary P5) and single-channel PNG encode/decode.

#include <zlib.h>

#include <algorithm>
#include <array>
#include <cctype>
#include <cmath>
#include <cstdint>
#include <cstdlib>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "cmrlab/error.hpp"
#include "cmrlab/image.hpp"
#include "cmrlab/io.hpp"

namespace cmrlab {

enum class ImageFormat { pgm, png };

inline ImageFormat format_from_path(const std::filesystem::path& path) {
  auto ext = path.extension().string();
  std::transform(ext.begin(), ext.end(), ext.begin(), [](unsigned char c) { return std::tolower(c); });
  if (ext == ".pgm") return ImageFormat::pgm;
  if (ext == ".png") return ImageFormat::png;
  throw UnsupportedFormatError("unsupported image extension '" + ext + "' (expected .pgm or .png)");
}

namespace detail {

inline bool pgm_space(std::uint8_t c) { return c == ' ' || c == '\t' || c == '\n' || c == '\r' || c == '\v' || c == '\f'; }

inline std::size_t pgm_header_int(std::span<const std::uint8_t> bytes, std::size_t& pos) {
  for (;;) {
    while (pos < bytes.size() && pgm_space(bytes[pos])) ++pos;
    if (pos < bytes.size() && bytes[pos] == '#') {
      while (pos < bytes.size() && bytes[pos] != '\n' && bytes[pos] != '\r') ++pos;
      continue;
    }
    break;
  }
  if (pos >= bytes.size()) throw DecodeError("truncated PGM header", pos);
  if (!std::isdigit(bytes[pos])) throw DecodeError("expected integer in PGM header", pos);
  std::size_t value = 0;
  while (pos < bytes.size() && std::isdigit(bytes[pos])) {
    value = value * 10 + (bytes[pos] - '0');
    if (value > (1u << 30)) throw DecodeError("PGM header value too large", pos);
    ++pos;
  }
  return value;
}

inline Image decode_pgm(std::span<const std::uint8_t> bytes) {
  if (bytes.size() < 2 || bytes[0] != 'P') throw DecodeError("missing PGM magic", 0);
  if (bytes[1] != '5') {
    throw UnsupportedFormatError(std::string("only binary P5 PGM is supported, got P") +
                                 static_cast<char>(bytes[1]));
  }
  std::size_t pos = 2;
  const std::size_t width = pgm_header_int(bytes, pos);
  const std::size_t height = pgm_header_int(bytes, pos);
  const std::size_t maxval = pgm_header_int(bytes, pos);
  if (width == 0 || height == 0) throw DecodeError("PGM has zero dimension", pos);
  if (maxval != 255 && maxval != 65535) {
    throw UnsupportedFormatError("PGM maxval must be 255 or 65535, got " + std::to_string(maxval));
  }
  if (pos >= bytes.size() || !pgm_space(bytes[pos])) throw DecodeError("missing whitespace after PGM header", pos);
  ++pos;
  const std::size_t bps = maxval == 255 ? 1 : 2;
  const std::size_t need = width * height * bps;
  if (bytes.size() - pos < need) throw DecodeError("truncated PGM pixel data", bytes.size());
  Image img(height, width);
  auto px = img.pixels();
  const double scale = 1.0 / static_cast<double>(maxval);
  for (std::size_t i = 0; i < width * height; ++i) {
    const std::size_t raw = bps == 1 ? bytes[pos + i] : (std::size_t{bytes[pos + 2 * i]} << 8) | bytes[pos + 2 * i + 1];
    px[i] = static_cast<double>(raw) * scale;
  }
  return img;
}

inline std::uint32_t be32(std::span<const std::uint8_t> b, std::size_t pos) {
  return (std::uint32_t{b[pos]} << 24) | (std::uint32_t{b[pos + 1]} << 16) | (std::uint32_t{b[pos + 2]} << 8) |
         std::uint32_t{b[pos + 3]};
}

inline void put_be32(std::vector<std::uint8_t>& out, std::uint32_t v) {
  out.push_back(static_cast<std::uint8_t>(v >> 24));
  out.push_back(static_cast<std::uint8_t>(v >> 16));
  out.push_back(static_cast<std::uint8_t>(v >> 8));
  out.push_back(static_cast<std::uint8_t>(v));
}

constexpr std::array<std::uint8_t, 8> kPngSignature = {0x89, 'P', 'N', 'G', '\r', '\n', 0x1a, '\n'};

inline int paeth(int a, int b, int c) {
  const int p = a + b - c;
  const int pa = std::abs(p - a);
  const int pb = std::abs(p - b);
  const int pc = std::abs(p - c);
  if (pa <= pb && pa <= pc) return a;
  if (pb <= pc) return b;
  return c;
}

inline Image decode_png(std::span<const std::uint8_t> bytes) {
  if (bytes.size() < 8 || !std::equal(kPngSignature.begin(), kPngSignature.end(), bytes.begin())) {
    throw DecodeError("missing PNG signature", 0);
  }
  std::size_t pos = 8;
  std::uint32_t width = 0;
  std::uint32_t height = 0;
  int depth = 0;
  bool have_header = false;
  bool have_end = false;
  std::vector<std::uint8_t> idat;
  while (pos < bytes.size() && !have_end) {
    if (bytes.size() - pos < 12) throw DecodeError("truncated PNG chunk header", pos);
    const std::uint32_t len = be32(bytes, pos);
    if (bytes.size() - pos - 12 < len) throw DecodeError("truncated PNG chunk", pos);
    const std::string type(bytes.begin() + static_cast<std::ptrdiff_t>(pos + 4),
                           bytes.begin() + static_cast<std::ptrdiff_t>(pos + 8));
    const auto data = bytes.subspan(pos + 8, len);
    const std::uint32_t crc_stored = be32(bytes, pos + 8 + len);
    const auto crc = static_cast<std::uint32_t>(
        crc32(crc32(0L, Z_NULL, 0), bytes.data() + pos + 4, static_cast<uInt>(len + 4)));
    if (crc != crc_stored) throw DecodeError("PNG chunk " + type + " CRC mismatch", pos + 8 + len);
    if (type == "IHDR") {
      if (len != 13) throw DecodeError("bad IHDR length", pos);
      width = be32(data, 0);
      height = be32(data, 4);
      depth = data[8];
      const int color = data[9];
      if (data[10] != 0 || data[11] != 0) throw DecodeError("unknown PNG compression/filter method", pos + 18);
      if (color != 0) {
        throw UnsupportedFormatError("PNG colour type " + std::to_string(color) +
                                     " is not single-channel grayscale");
      }
      if (depth != 8 && depth != 16) {
        throw UnsupportedFormatError("PNG bit depth " + std::to_string(depth) + " unsupported (8 or 16)");
      }
      if (data[12] != 0) throw UnsupportedFormatError("interlaced PNG unsupported");
      if (width == 0 || height == 0) throw DecodeError("PNG has zero dimension", pos + 8);
      have_header = true;
    } else if (type == "IDAT") {
      if (!have_header) throw DecodeError("IDAT before IHDR", pos);
      idat.insert(idat.end(), data.begin(), data.end());
    } else if (type == "IEND") {
      have_end = true;
    } else if (type == "PLTE") {
      throw UnsupportedFormatError("palette PNG unsupported");
    }
    pos += 12 + len;
  }
  if (!have_header) throw DecodeError("PNG missing IHDR", pos);
  if (!have_end) throw DecodeError("PNG missing IEND", pos);

  const std::size_t bpp = depth / 8;
  const std::size_t stride = std::size_t{width} * bpp;
  const std::size_t expected = std::size_t{height} * (stride + 1);
  std::vector<std::uint8_t> raw(expected);
  uLongf out_len = static_cast<uLongf>(expected);
  const int rc = uncompress(raw.data(), &out_len, idat.data(), static_cast<uLong>(idat.size()));
  if (rc != Z_OK || out_len != expected) throw DecodeError("PNG image data failed to inflate", pos);

  std::vector<std::uint8_t> prev(stride, 0);
  std::vector<std::uint8_t> cur(stride);
  Image img(height, width);
  auto px = img.pixels();
  const double scale = 1.0 / (depth == 8 ? 255.0 : 65535.0);
  for (std::size_t r = 0; r < height; ++r) {
    const std::size_t row_pos = r * (stride + 1);
    const int filter = raw[row_pos];
    const std::uint8_t* src = raw.data() + row_pos + 1;
    for (std::size_t i = 0; i < stride; ++i) {
      const int a = i >= bpp ? cur[i - bpp] : 0;
      const int b = prev[i];
      const int c = i >= bpp ? prev[i - bpp] : 0;
      int v = src[i];
      switch (filter) {
        case 0: break;
        case 1: v += a; break;
        case 2: v += b; break;
        case 3: v += (a + b) / 2; break;
        case 4: v += paeth(a, b, c); break;
        default: throw DecodeError("unknown PNG row filter " + std::to_string(filter), row_pos);
      }
      cur[i] = static_cast<std::uint8_t>(v & 0xff);
    }
    for (std::size_t c = 0; c < width; ++c) {
      const std::size_t v = depth == 8 ? cur[c] : (std::size_t{cur[2 * c]} << 8) | cur[2 * c + 1];
      px[r * width + c] = static_cast<double>(v) * scale;
    }
    std::swap(prev, cur);
  }
  return img;
}

// Round-half-up 8-bit quantization; values marginally outside [0,1] are clamped.
inline std::vector<std::uint8_t> quantize8(const Image& img) {
  constexpr double tol = 1e-9;
  std::vector<std::uint8_t> q(img.size());
  for (std::size_t r = 0; r < img.height(); ++r) {
    for (std::size_t c = 0; c < img.width(); ++c) {
      const double v = img(r, c);
      if (!(v >= -tol && v <= 1.0 + tol)) throw RangeError("pixel value " + std::to_string(v) + " outside [0,1]", r, c);
      q[r * img.width() + c] = static_cast<std::uint8_t>(std::floor(std::clamp(v, 0.0, 1.0) * 255.0 + 0.5));
    }
  }
  return q;
}

inline void append_png_chunk(std::vector<std::uint8_t>& out, const char* type, std::span<const std::uint8_t> data) {
  put_be32(out, static_cast<std::uint32_t>(data.size()));
  const std::size_t type_pos = out.size();
  out.insert(out.end(), type, type + 4);
  out.insert(out.end(), data.begin(), data.end());
  const auto crc = crc32(crc32(0L, Z_NULL, 0), out.data() + type_pos, static_cast<uInt>(data.size() + 4));
  put_be32(out, static_cast<std::uint32_t>(crc));
}

}  // namespace detail

inline Image decode_image(std::span<const std::uint8_t> bytes, ImageFormat format) {
  return format == ImageFormat::pgm ? detail::decode_pgm(bytes) : detail::decode_png(bytes);
}

inline std::vector<std::uint8_t> encode_image(const Image& img, ImageFormat format) {
  if (img.empty()) throw DimensionError("cannot encode an empty image");
  const auto q = detail::quantize8(img);
  std::vector<std::uint8_t> out;
  if (format == ImageFormat::pgm) {
    const std::string header = "P5\n" + std::to_string(img.width()) + " " + std::to_string(img.height()) + "\n255\n";
    out.assign(header.begin(), header.end());
    out.insert(out.end(), q.begin(), q.end());
    return out;
  }
  out.assign(detail::kPngSignature.begin(), detail::kPngSignature.end());
  std::vector<std::uint8_t> ihdr;
  detail::put_be32(ihdr, static_cast<std::uint32_t>(img.width()));
  detail::put_be32(ihdr, static_cast<std::uint32_t>(img.height()));
  ihdr.insert(ihdr.end(), {8, 0, 0, 0, 0});
  detail::append_png_chunk(out, "IHDR", ihdr);

  std::vector<std::uint8_t> filtered;
  filtered.reserve(img.height() * (img.width() + 1));
  for (std::size_t r = 0; r < img.height(); ++r) {
    filtered.push_back(0);
    filtered.insert(filtered.end(), q.begin() + static_cast<std::ptrdiff_t>(r * img.width()),
                    q.begin() + static_cast<std::ptrdiff_t>((r + 1) * img.width()));
  }
  uLongf zlen = compressBound(static_cast<uLong>(filtered.size()));
  std::vector<std::uint8_t> z(zlen);
  if (compress2(z.data(), &zlen, filtered.data(), static_cast<uLong>(filtered.size()), 6) != Z_OK) {
    throw IoError("PNG deflate failed");
  }
  z.resize(zlen);
  detail::append_png_chunk(out, "IDAT", z);
  detail::append_png_chunk(out, "IEND", {});
  return out;
}

inline Image read_image(const std::filesystem::path& path) {
  const auto format = format_from_path(path);
  const auto bytes = read_file_bytes(path);
  return decode_image(bytes, format);
}

inline void write_image(const std::filesystem::path& path, const Image& img) {
  write_file_atomic(path, encode_image(img, format_from_path(path)));
}

}  // namespace cmrlab
