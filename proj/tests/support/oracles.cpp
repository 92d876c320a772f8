#include "oracles.hpp"

#include <algorithm>
#include <cmath>

namespace ddc::testing {

double oracle_psnr(const Image& x, const Image& y) {
  long double sq = 0.0L;
  std::size_t n = 0;
  for (int r = 0; r < x.height(); ++r) {
    for (int c = 0; c < x.width(); ++c) {
      for (int k = 0; k < x.channels(); ++k) {
        const long double d = static_cast<long double>(x.at(r, c, k)) - y.at(r, c, k);
        sq += d * d;
        ++n;
      }
    }
  }
  const long double rmse = std::sqrt(sq / n);
  return static_cast<double>(20.0L * std::log10(1.0L / rmse));
}

double oracle_ssim(const Image& x, const Image& y) {
  constexpr int kWin = 11;
  constexpr double kSigma = 1.5;
  const double c1 = (0.01 * 1.0) * (0.01 * 1.0);
  const double c2 = (0.03 * 1.0) * (0.03 * 1.0);

  double weight[kWin][kWin];
  double total = 0.0;
  for (int i = 0; i < kWin; ++i) {
    for (int j = 0; j < kWin; ++j) {
      const double di = i - kWin / 2, dj = j - kWin / 2;
      weight[i][j] = std::exp(-(di * di + dj * dj) / (2 * kSigma * kSigma));
      total += weight[i][j];
    }
  }
  for (auto& row : weight) {
    for (double& v : row) v /= total;
  }

  double channel_sum = 0.0;
  for (int k = 0; k < x.channels(); ++k) {
    double map_sum = 0.0;
    int positions = 0;
    for (int top = 0; top + kWin <= x.height(); ++top) {
      for (int left = 0; left + kWin <= x.width(); ++left) {
        double mx = 0, my = 0;
        for (int i = 0; i < kWin; ++i) {
          for (int j = 0; j < kWin; ++j) {
            mx += weight[i][j] * x.at(top + i, left + j, k);
            my += weight[i][j] * y.at(top + i, left + j, k);
          }
        }
        double vx = 0, vy = 0, cov = 0;
        for (int i = 0; i < kWin; ++i) {
          for (int j = 0; j < kWin; ++j) {
            const double a = x.at(top + i, left + j, k) - mx;
            const double b = y.at(top + i, left + j, k) - my;
            vx += weight[i][j] * a * a;
            vy += weight[i][j] * b * b;
            cov += weight[i][j] * a * b;
          }
        }
        const double luminance = (2 * mx * my + c1) / (mx * mx + my * my + c1);
        const double structure = (2 * cov + c2) / (vx + vy + c2);
        map_sum += luminance * structure;
        ++positions;
      }
    }
    channel_sum += map_sum / positions;
  }
  return channel_sum / x.channels();
}

double streak_orientation_deg(const Image& layer) {
  double jxx = 0, jyy = 0, jxy = 0;
  for (int r = 1; r + 1 < layer.height(); ++r) {
    for (int c = 1; c + 1 < layer.width(); ++c) {
      if (layer.at(r, c, 0) <= 0.0f) continue;
      const double gx = 0.5 * (layer.at(r, c + 1, 0) - layer.at(r, c - 1, 0));
      const double gy = 0.5 * (layer.at(r + 1, c, 0) - layer.at(r - 1, c, 0));
      jxx += gx * gx;
      jyy += gy * gy;
      jxy += gx * gy;
    }
  }
  // Principal eigenvector angle (x right, y down) of [[jxx, jxy], [jxy, jyy]].
  const double gradient_angle = 0.5 * std::atan2(2 * jxy, jxx - jyy);
  // Streak direction is perpendicular: (-sin, cos) in (x, y-down) coordinates.
  const double sx = -std::sin(gradient_angle);
  double sy = std::cos(gradient_angle);
  // Express as a lean from vertical with "up" = -y.
  double up_x = sx, up_y = -sy;
  if (up_y < 0) {
    up_x = -up_x;
    up_y = -up_y;
  }
  return std::atan2(up_x, up_y) * 180.0 / 3.14159265358979323846;
}

double streak_axis_deg(const Image& layer) {
  double s = 0, mx = 0, my = 0;
  for (int r = 0; r < layer.height(); ++r) {
    for (int c = 0; c < layer.width(); ++c) {
      const double v = layer.at(r, c, 0);
      s += v;
      mx += v * c;
      my += v * r;
    }
  }
  mx /= s;
  my /= s;
  double cxx = 0, cyy = 0, cxy = 0;
  for (int r = 0; r < layer.height(); ++r) {
    for (int c = 0; c < layer.width(); ++c) {
      const double v = layer.at(r, c, 0);
      cxx += v * (c - mx) * (c - mx);
      cyy += v * (r - my) * (r - my);
      cxy += v * (c - mx) * (r - my);
    }
  }
  // Major axis (x right, y down), re-expressed with "up" = -y.
  const double axis = 0.5 * std::atan2(2 * cxy, cxx - cyy);
  double up_x = std::cos(axis), up_y = -std::sin(axis);
  if (up_y < 0) {
    up_x = -up_x;
    up_y = -up_y;
  }
  return std::atan2(up_x, up_y) * 180.0 / 3.14159265358979323846;
}

int count_blobs(const Image& layer, bool* touches_border) {
  const int h = layer.height(), w = layer.width();
  std::vector<int> label(static_cast<std::size_t>(h) * w, 0);
  int blobs = 0;
  bool border = false;
  std::vector<std::pair<int, int>> stack;
  for (int r0 = 0; r0 < h; ++r0) {
    for (int c0 = 0; c0 < w; ++c0) {
      if (layer.at(r0, c0, 0) <= 0.0f || label[r0 * w + c0] != 0) continue;
      ++blobs;
      stack.assign(1, {r0, c0});
      label[r0 * w + c0] = blobs;
      while (!stack.empty()) {
        auto [r, c] = stack.back();
        stack.pop_back();
        border |= r == 0 || c == 0 || r == h - 1 || c == w - 1;
        for (int dr = -1; dr <= 1; ++dr) {
          for (int dc = -1; dc <= 1; ++dc) {
            const int rr = r + dr, cc = c + dc;
            if (rr < 0 || cc < 0 || rr >= h || cc >= w) continue;
            if (layer.at(rr, cc, 0) <= 0.0f || label[rr * w + cc] != 0) continue;
            label[rr * w + cc] = blobs;
            stack.emplace_back(rr, cc);
          }
        }
      }
    }
  }
  if (touches_border != nullptr) *touches_border = border;
  return blobs;
}

double central_difference(const std::function<double(const std::vector<double>&)>& f,
                          std::vector<double>& x, std::size_t i, double h) {
  const double saved = x[i];
  x[i] = saved + h;
  const double plus = f(x);
  x[i] = saved - h;
  const double minus = f(x);
  x[i] = saved;
  return (plus - minus) / (2 * h);
}

double relative_error(double a, double b, double floor) {
  return std::abs(a - b) / std::max({std::abs(a), std::abs(b), floor});
}

}  // namespace ddc::testing
