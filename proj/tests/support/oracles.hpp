#pragma once

// Independent reference computations used as test oracles. Nothing here
// calls into the library code it is checking.

#include <cstddef>
#include <functional>
#include <vector>

#include "ddcnet/image.hpp"

namespace ddc::testing {

// 20 log10(1 / RMSE) accumulated in long double.
double oracle_psnr(const Image& x, const Image& y);

// SSIM evaluated window by window straight from its definition: a 2-D
// Gaussian (11x11, sigma 1.5) normalised over the full window, local means,
// variances and covariance computed per position, averaged over the valid
// positions of each channel and then over channels.
double oracle_ssim(const Image& x, const Image& y);

// Dominant streak orientation of a rain layer, in degrees from vertical
// (positive leans the top to the right). Uses the principal eigenvector of
// the summed gradient outer product over non-zero pixels; streaks run
// perpendicular to it.
double streak_orientation_deg(const Image& layer);

// Axis of a single streak from intensity-weighted second moments, same angle
// convention. The gradient estimate above is biased outward for thin slanted
// lines (pixel stepping puts gradient energy along the line), so angled
// streaks are checked with this one.
double streak_axis_deg(const Image& layer);

// Number of 8-connected groups of non-zero pixels; `touches_border` is set
// when any of them reaches the image edge.
int count_blobs(const Image& layer, bool* touches_border = nullptr);

// Central difference of f along coordinate i of x (x is restored).
double central_difference(const std::function<double(const std::vector<double>&)>& f,
                          std::vector<double>& x, std::size_t i, double h);

// |a - b| / max(|a|, |b|, floor).
double relative_error(double a, double b, double floor = 1e-12);

}  // namespace ddc::testing
