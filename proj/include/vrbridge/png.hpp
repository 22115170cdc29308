#pragma once

// 8-bit RGBA PNG encode/decode through libpng's simplified API.

#include <png.h>

#include <cstdint>
#include <cstring>
#include <fstream>
#include <iterator>
#include <string>
#include <vector>

#include "vrbridge/error.hpp"
#include "vrbridge/framebuffer.hpp"

namespace vrbridge::render {

inline std::vector<std::uint8_t> encode_png(const Framebuffer& fb) {
  png_image img;
  std::memset(&img, 0, sizeof img);
  img.version = PNG_IMAGE_VERSION;
  img.width = static_cast<png_uint_32>(fb.width);
  img.height = static_cast<png_uint_32>(fb.height);
  img.format = PNG_FORMAT_RGBA;
  png_alloc_size_t size = 0;
  if (!png_image_write_to_memory(&img, nullptr, &size, 0, fb.color.data(), 0, nullptr))
    fail(ErrorCode::Io, std::string("PNG encode failed: ") + img.message);
  std::vector<std::uint8_t> out(size);
  if (!png_image_write_to_memory(&img, out.data(), &size, 0, fb.color.data(), 0, nullptr))
    fail(ErrorCode::Io, std::string("PNG encode failed: ") + img.message);
  out.resize(size);
  return out;
}

inline Framebuffer decode_png(const std::vector<std::uint8_t>& bytes) {
  png_image img;
  std::memset(&img, 0, sizeof img);
  img.version = PNG_IMAGE_VERSION;
  if (!png_image_begin_read_from_memory(&img, bytes.data(), bytes.size()))
    fail(ErrorCode::Io, std::string("PNG decode failed: ") + img.message);
  img.format = PNG_FORMAT_RGBA;
  Framebuffer fb(static_cast<int>(img.width), static_cast<int>(img.height));
  if (!png_image_finish_read(&img, nullptr, fb.color.data(), 0, nullptr)) {
    png_image_free(&img);
    fail(ErrorCode::Io, std::string("PNG decode failed: ") + img.message);
  }
  return fb;
}

inline void write_png(const Framebuffer& fb, const std::string& path) {
  const auto bytes = encode_png(fb);
  std::ofstream out(path, std::ios::binary);
  if (!out) fail(ErrorCode::Io, "cannot write '" + path + "'");
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!out) fail(ErrorCode::Io, "write to '" + path + "' failed");
}

inline Framebuffer read_png(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) fail(ErrorCode::Io, "cannot open '" + path + "'");
  std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  return decode_png(bytes);
}

}  // namespace vrbridge::render
