#pragma once

#include <cstdint>
#include <vector>

#include "ddcnet/tensor.hpp"

// Forward/backward primitives the networks are assembled from. Backward
// functions take the forward inputs/outputs they need explicitly; nothing is
// cached behind the caller's back.
namespace ddc::nn {

struct ConvGeometry {
  int kernel = 3;
  int stride = 1;
  int pad = 1;
  int dilation = 1;

  bool operator==(const ConvGeometry&) const = default;
};

int conv_output_size(int input, const ConvGeometry& g);

// weight: (out, in, k, k); bias: (out, 1, 1, 1).
Tensor conv2d(const Tensor& x, const Tensor& weight, const Tensor& bias, const ConvGeometry& g);

// Given dL/dy, writes dL/dx into *dx (if non-null) and accumulates dL/dW and
// dL/db into *dweight / *dbias (if non-null).
void conv2d_backward(const Tensor& x, const Tensor& weight, const Tensor& dy,
                     const ConvGeometry& g, Tensor* dx, Tensor* dweight, Tensor* dbias);

void relu_inplace(Tensor& t);
// dy *= (y > 0), where y is the ReLU output.
void relu_backward_inplace(const Tensor& y, Tensor& dy);

void leaky_relu_inplace(Tensor& t, float slope);
void leaky_relu_backward_inplace(const Tensor& y, Tensor& dy, float slope);

void sigmoid_inplace(Tensor& t);
// dy *= y * (1 - y), where y is the sigmoid output.
void sigmoid_backward_inplace(const Tensor& y, Tensor& dy);

// 2x2 max pool, stride 2. `argmax` receives the flat in-plane index of the
// winner for every output element.
Tensor max_pool2x2(const Tensor& x, std::vector<std::uint32_t>* argmax);
Tensor max_pool2x2_backward(const Tensor& dy, const std::vector<std::uint32_t>& argmax,
                            const Shape& input_shape);

Tensor upsample_nearest2x(const Tensor& x);
Tensor upsample_nearest2x_backward(const Tensor& dy);

Tensor concat_channels(const Tensor& a, const Tensor& b);
// Splits along channels at `first_channels`.
void split_channels(const Tensor& t, int first_channels, Tensor& a, Tensor& b);

// Mirror padding (edge sample not repeated), periodic for pads larger than
// the input. Padding goes to the bottom/right.
Tensor reflect_pad(const Tensor& x, int height, int width);
Tensor crop(const Tensor& x, int height, int width);

}  // namespace ddc::nn
