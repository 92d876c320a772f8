#pragma once

#include <cstddef>
#include <span>
#include <string>
#include <vector>

#include "ddcnet/image.hpp"

namespace ddc {

struct Shape {
  int n = 0;
  int c = 0;
  int h = 0;
  int w = 0;

  std::size_t count() const {
    return static_cast<std::size_t>(n) * c * h * w;
  }
  bool operator==(const Shape&) const = default;
};

std::string to_string(const Shape& s);

// Dense float tensor in NCHW order. Also used for conv weights (out, in, kh, kw)
// and biases (out, 1, 1, 1).
class Tensor {
 public:
  Tensor() = default;
  explicit Tensor(Shape shape, float fill = 0.0f)
      : shape_(shape), data_(shape.count(), fill) {}
  Tensor(int n, int c, int h, int w, float fill = 0.0f)
      : Tensor(Shape{n, c, h, w}, fill) {}

  const Shape& shape() const { return shape_; }
  int n() const { return shape_.n; }
  int c() const { return shape_.c; }
  int h() const { return shape_.h; }
  int w() const { return shape_.w; }
  std::size_t size() const { return data_.size(); }
  bool empty() const { return data_.empty(); }

  float* ptr() { return data_.data(); }
  const float* ptr() const { return data_.data(); }
  std::span<float> data() { return data_; }
  std::span<const float> data() const { return data_; }

  float* plane(int n, int c) {
    return data_.data() + (static_cast<std::size_t>(n) * shape_.c + c) * plane_size();
  }
  const float* plane(int n, int c) const {
    return data_.data() + (static_cast<std::size_t>(n) * shape_.c + c) * plane_size();
  }
  std::size_t plane_size() const { return static_cast<std::size_t>(shape_.h) * shape_.w; }
  std::size_t sample_size() const { return plane_size() * shape_.c; }

  float& at(int n, int c, int y, int x) { return plane(n, c)[static_cast<std::size_t>(y) * shape_.w + x]; }
  float at(int n, int c, int y, int x) const { return plane(n, c)[static_cast<std::size_t>(y) * shape_.w + x]; }

  void fill(float v);
  Tensor& operator+=(const Tensor& other);
  Tensor& operator*=(float s);

  // Copy of samples [first, first + count).
  Tensor slice(int first, int count) const;

  bool all_finite() const;
  bool operator==(const Tensor& other) const = default;

 private:
  Shape shape_;
  std::vector<float> data_;
};

// Stacks equally shaped images into an N x C x H x W tensor.
Tensor to_tensor(std::span<const Image> images);
Tensor to_tensor(const Image& image);
// Extracts one sample; values are copied unchanged (no clamping).
Image to_image(const Tensor& t, int index = 0);

}  // namespace ddc
