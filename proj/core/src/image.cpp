#include "ddcnet/image.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

#include "ddcnet/errors.hpp"

namespace ddc {

Image::Image(int height, int width, int channels, float fill)
    : height_(height), width_(width), channels_(channels) {
  if (height < 1 || width < 1) {
    throw InvalidParameter("image dimensions must be positive, got " +
                           std::to_string(height) + "x" + std::to_string(width));
  }
  if (channels != 1 && channels != 3) {
    throw InvalidParameter("image must have 1 or 3 channels, got " +
                           std::to_string(channels));
  }
  data_.assign(static_cast<std::size_t>(height) * width * channels, fill);
}

void Image::validate() const {
  for (std::size_t i = 0; i < data_.size(); ++i) {
    const float v = data_[i];
    if (!std::isfinite(v) || v < 0.0f || v > 1.0f) {
      std::ostringstream msg;
      msg << "image sample " << i << " out of [0,1]: " << v;
      throw InvalidParameter(msg.str());
    }
  }
}

Image Image::crop(int top, int left, int height, int width) const {
  if (top < 0 || left < 0 || top + height > height_ || left + width > width_) {
    throw ImageTooSmall("crop " + std::to_string(height) + "x" +
                        std::to_string(width) + " at (" + std::to_string(top) +
                        "," + std::to_string(left) + ") exceeds image " +
                        shape_string(*this));
  }
  Image out(height, width, channels_);
  const std::size_t row = static_cast<std::size_t>(width) * channels_;
  for (int y = 0; y < height; ++y) {
    const float* src = &data_[(static_cast<std::size_t>(top + y) * width_ + left) * channels_];
    std::copy(src, src + row, out.data_.begin() + static_cast<std::ptrdiff_t>(y * row));
  }
  return out;
}

Image Image::flipped_horizontally() const {
  Image out(height_, width_, channels_);
  for (int y = 0; y < height_; ++y)
    for (int x = 0; x < width_; ++x)
      for (int c = 0; c < channels_; ++c) out.at(y, width_ - 1 - x, c) = at(y, x, c);
  return out;
}

Image Image::with_channels(int channels) const {
  if (channels == channels_) return *this;
  if (channels_ != 1) {
    throw InvalidParameter("only single-channel images can be replicated");
  }
  Image out(height_, width_, channels);
  for (int y = 0; y < height_; ++y)
    for (int x = 0; x < width_; ++x)
      for (int c = 0; c < channels; ++c) out.at(y, x, c) = at(y, x, 0);
  return out;
}

std::string shape_string(const Image& image) {
  std::ostringstream s;
  s << image.height() << "x" << image.width() << "x" << image.channels();
  return s.str();
}

Image quantize_8bit(const Image& image) {
  Image out = image;
  for (float& v : out.data()) {
    const float clamped = std::min(1.0f, std::max(0.0f, v));
    v = static_cast<float>(std::lround(clamped * 255.0f)) / 255.0f;
  }
  return out;
}

}  // namespace ddc
