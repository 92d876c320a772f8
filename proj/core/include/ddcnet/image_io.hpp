#pragma once

#include <cmath>
#include <cstdint>
#include <filesystem>

#include "ddcnet/image.hpp"

namespace ddc {

// Decodes PNG/JPEG/BMP into an RGB (or gray) float image in [0, 1].
// Alpha channels are dropped. Throws MissingFile or DecodeError naming the file.
Image load_image(const std::filesystem::path& path);

// Writes an 8-bit PNG; samples are rounded to the nearest k/255.
// Creates the parent directory if needed. Throws IoError.
void save_png(const std::filesystem::path& path, const Image& image);

// The byte written by save_png for a sample.
inline std::uint8_t to_byte(float v) {
  const float c = v < 0.0f ? 0.0f : (v > 1.0f ? 1.0f : v);
  return static_cast<std::uint8_t>(std::lround(c * 255.0f));
}

bool is_image_file(const std::filesystem::path& path);

}  // namespace ddc
