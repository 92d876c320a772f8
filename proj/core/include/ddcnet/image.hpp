#pragma once

#include <cstddef>
#include <span>
#include <string>
#include <vector>

namespace ddc {

// H x W x C image with interleaved (HWC) float samples in [0, 1].
class Image {
 public:
  Image() = default;
  Image(int height, int width, int channels, float fill = 0.0f);

  static Image constant(int height, int width, int channels, float value) {
    return Image(height, width, channels, value);
  }

  int height() const { return height_; }
  int width() const { return width_; }
  int channels() const { return channels_; }
  std::size_t size() const { return data_.size(); }
  bool empty() const { return data_.empty(); }

  float& at(int y, int x, int c) {
    return data_[(static_cast<std::size_t>(y) * width_ + x) * channels_ + c];
  }
  float at(int y, int x, int c) const {
    return data_[(static_cast<std::size_t>(y) * width_ + x) * channels_ + c];
  }

  std::span<float> data() { return data_; }
  std::span<const float> data() const { return data_; }

  bool same_shape(const Image& other) const {
    return height_ == other.height_ && width_ == other.width_ &&
           channels_ == other.channels_;
  }

  // Throws InvalidParameter unless every sample is finite and in [0, 1].
  void validate() const;

  Image crop(int top, int left, int height, int width) const;
  Image flipped_horizontally() const;
  // Replicates a single-channel image to `channels` channels.
  Image with_channels(int channels) const;

  bool operator==(const Image& other) const = default;

 private:
  int height_ = 0;
  int width_ = 0;
  int channels_ = 0;
  std::vector<float> data_;
};

std::string shape_string(const Image& image);

// Rounds every sample to the nearest k/255.
Image quantize_8bit(const Image& image);

}  // namespace ddc
