#include "ddcnet/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

#include "ddcnet/errors.hpp"

namespace ddc {

std::string to_string(const Shape& s) {
  std::ostringstream out;
  out << "(" << s.n << "," << s.c << "," << s.h << "," << s.w << ")";
  return out.str();
}

void Tensor::fill(float v) { std::fill(data_.begin(), data_.end(), v); }

Tensor& Tensor::operator+=(const Tensor& other) {
  if (!(shape_ == other.shape_)) {
    throw ShapeMismatch("tensor add " + to_string(shape_) + " vs " + to_string(other.shape_));
  }
  for (std::size_t i = 0; i < data_.size(); ++i) data_[i] += other.data_[i];
  return *this;
}

Tensor& Tensor::operator*=(float s) {
  for (float& v : data_) v *= s;
  return *this;
}

Tensor Tensor::slice(int first, int count) const {
  if (first < 0 || count < 0 || first + count > shape_.n) {
    throw ShapeMismatch("slice out of range");
  }
  Tensor out(count, shape_.c, shape_.h, shape_.w);
  const auto begin = data_.begin() + static_cast<std::ptrdiff_t>(first * sample_size());
  std::copy(begin, begin + static_cast<std::ptrdiff_t>(count * sample_size()), out.data_.begin());
  return out;
}

bool Tensor::all_finite() const {
  return std::all_of(data_.begin(), data_.end(), [](float v) { return std::isfinite(v); });
}

Tensor to_tensor(std::span<const Image> images) {
  if (images.empty()) throw InvalidParameter("cannot stack zero images");
  const Image& first = images.front();
  Tensor t(static_cast<int>(images.size()), first.channels(), first.height(), first.width());
  for (std::size_t i = 0; i < images.size(); ++i) {
    const Image& img = images[i];
    if (!img.same_shape(first)) {
      throw ShapeMismatch("batch images differ: " + shape_string(first) + " vs " +
                          shape_string(img));
    }
    for (int c = 0; c < img.channels(); ++c) {
      float* dst = t.plane(static_cast<int>(i), c);
      for (int y = 0; y < img.height(); ++y)
        for (int x = 0; x < img.width(); ++x) *dst++ = img.at(y, x, c);
    }
  }
  return t;
}

Tensor to_tensor(const Image& image) { return to_tensor(std::span<const Image>(&image, 1)); }

Image to_image(const Tensor& t, int index) {
  if (index < 0 || index >= t.n()) throw ShapeMismatch("sample index out of range");
  Image img(t.h(), t.w(), t.c());
  for (int c = 0; c < t.c(); ++c) {
    const float* src = t.plane(index, c);
    for (int y = 0; y < t.h(); ++y)
      for (int x = 0; x < t.w(); ++x) img.at(y, x, c) = *src++;
  }
  return img;
}

}  // namespace ddc
