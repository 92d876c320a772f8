#include "ddcnet/metrics.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <limits>
#include <numeric>
#include <sstream>

#include "ddcnet/errors.hpp"
#include "ddcnet/image_io.hpp"
#include "ddcnet/rng.hpp"

namespace ddc {

namespace {

void require_same_shape(const Image& x, const Image& y) {
  if (!x.same_shape(y)) {
    throw ShapeMismatch("metric inputs differ in shape: " + shape_string(x) + " vs " + shape_string(y));
  }
}

std::array<double, kSsimWindow> gaussian_window() {
  std::array<double, kSsimWindow> g{};
  const int r = kSsimWindow / 2;
  double sum = 0.0;
  for (int i = 0; i < kSsimWindow; ++i) {
    const double d = i - r;
    g[i] = std::exp(-d * d / (2.0 * kSsimSigma * kSsimSigma));
    sum += g[i];
  }
  for (double& v : g) v /= sum;
  return g;
}

// Valid-region separable filter of an H x W plane.
std::vector<double> filter_valid(const std::vector<double>& plane, int h, int w,
                                 const std::array<double, kSsimWindow>& g) {
  const int oh = h - kSsimWindow + 1;
  const int ow = w - kSsimWindow + 1;
  std::vector<double> rows(static_cast<std::size_t>(h) * ow);
  for (int y = 0; y < h; ++y) {
    const double* src = plane.data() + static_cast<std::size_t>(y) * w;
    for (int x = 0; x < ow; ++x) {
      double s = 0.0;
      for (int k = 0; k < kSsimWindow; ++k) s += g[k] * src[x + k];
      rows[static_cast<std::size_t>(y) * ow + x] = s;
    }
  }
  std::vector<double> out(static_cast<std::size_t>(oh) * ow);
  for (int y = 0; y < oh; ++y) {
    for (int x = 0; x < ow; ++x) {
      double s = 0.0;
      for (int k = 0; k < kSsimWindow; ++k) s += g[k] * rows[static_cast<std::size_t>(y + k) * ow + x];
      out[static_cast<std::size_t>(y) * ow + x] = s;
    }
  }
  return out;
}

std::string json_number_or_inf(double v) {
  std::ostringstream os;
  if (std::isinf(v)) {
    os << "inf";
  } else {
    os << std::fixed << std::setprecision(4) << v;
  }
  return os.str();
}

nlohmann::json psnr_json(double v) {
  if (std::isinf(v)) return "inf";
  return v;
}

}  // namespace

double psnr(const Image& x, const Image& y) {
  require_same_shape(x, y);
  if (x.empty()) throw ShapeMismatch("metric inputs are empty");
  const auto a = x.data();
  const auto b = y.data();
  double sum = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const double d = static_cast<double>(a[i]) - static_cast<double>(b[i]);
    sum += d * d;
  }
  const double mse = sum / static_cast<double>(a.size());
  if (mse == 0.0) return std::numeric_limits<double>::infinity();
  return -10.0 * std::log10(mse);
}

double ssim(const Image& x, const Image& y) {
  require_same_shape(x, y);
  const int h = x.height();
  const int w = x.width();
  if (std::min(h, w) < kSsimWindow) {
    throw ImageTooSmall("SSIM needs at least " + std::to_string(kSsimWindow) + "x" +
                        std::to_string(kSsimWindow) + " pixels, got " + shape_string(x));
  }
  constexpr double c1 = 0.01 * 0.01;
  constexpr double c2 = 0.03 * 0.03;
  const auto g = gaussian_window();
  const std::size_t n = static_cast<std::size_t>(h) * w;
  double total = 0.0;
  for (int c = 0; c < x.channels(); ++c) {
    std::vector<double> px(n), py(n), pxx(n), pyy(n), pxy(n);
    for (int yy = 0; yy < h; ++yy) {
      for (int xx = 0; xx < w; ++xx) {
        const std::size_t i = static_cast<std::size_t>(yy) * w + xx;
        px[i] = x.at(yy, xx, c);
        py[i] = y.at(yy, xx, c);
        pxx[i] = px[i] * px[i];
        pyy[i] = py[i] * py[i];
        pxy[i] = px[i] * py[i];
      }
    }
    const auto mx = filter_valid(px, h, w, g);
    const auto my = filter_valid(py, h, w, g);
    const auto sxx = filter_valid(pxx, h, w, g);
    const auto syy = filter_valid(pyy, h, w, g);
    const auto sxy = filter_valid(pxy, h, w, g);
    double sum = 0.0;
    for (std::size_t i = 0; i < mx.size(); ++i) {
      const double vx = sxx[i] - mx[i] * mx[i];
      const double vy = syy[i] - my[i] * my[i];
      const double cov = sxy[i] - mx[i] * my[i];
      sum += ((2.0 * mx[i] * my[i] + c1) * (2.0 * cov + c2)) /
             ((mx[i] * mx[i] + my[i] * my[i] + c1) * (vx + vy + c2));
    }
    total += sum / static_cast<double>(mx.size());
  }
  return total / x.channels();
}

EvalReport evaluate_images(const std::map<std::string, Image>& results,
                           const std::map<std::string, Image>& truths) {
  std::vector<std::string> only_results, only_truths;
  for (const auto& [id, _] : results) {
    if (!truths.count(id)) only_results.push_back(id);
  }
  for (const auto& [id, _] : truths) {
    if (!results.count(id)) only_truths.push_back(id);
  }
  if (!only_results.empty() || !only_truths.empty()) {
    std::string msg = "result and ground-truth ids do not match;";
    auto list = [&msg](const char* label, const std::vector<std::string>& ids) {
      if (ids.empty()) return;
      msg += std::string(" ") + label + ":";
      for (const auto& id : ids) msg += " " + id;
    };
    list("results only", only_results);
    list("truths only", only_truths);
    throw IdMismatch(msg);
  }
  if (results.empty()) throw InvalidParameter("nothing to evaluate: both sets are empty");

  EvalReport report;
  double psnr_sum = 0.0, ssim_sum = 0.0;
  for (const auto& [id, result] : results) {
    const Image& truth = truths.at(id);
    ImageScore score{id, psnr(result, truth), ssim(result, truth)};
    psnr_sum += score.psnr_db;
    ssim_sum += score.ssim;
    report.per_image.push_back(score);
  }
  const auto n = static_cast<double>(report.per_image.size());
  report.mean_psnr = psnr_sum / n;
  report.mean_ssim = ssim_sum / n;
  return report;
}

EvalReport evaluate_corpus(const Manifest& results, const Manifest& truths) {
  auto load_all = [](const Manifest& m) {
    std::map<std::string, Image> images;
    for (const auto& e : m.entries) images.emplace(e.id, load_image(m.resolve(m.primary_path(e))));
    return images;
  };
  return evaluate_images(load_all(results), load_all(truths));
}

nlohmann::json to_json(const TimingRecord& t) {
  return {{"image_size", {t.height, t.width}},
          {"warmup_runs", t.warmup_runs},
          {"measured_runs", t.measured_runs},
          {"seconds", t.seconds},
          {"median_seconds", t.median_seconds},
          {"mean_seconds", t.mean_seconds},
          {"device_label", t.device_label}};
}

nlohmann::json to_json(const EvalReport& report) {
  nlohmann::json per_image = nlohmann::json::array();
  for (const auto& s : report.per_image) {
    per_image.push_back({{"id", s.id}, {"psnr_db", psnr_json(s.psnr_db)}, {"ssim", s.ssim}});
  }
  nlohmann::json j{{"per_image", per_image},
                   {"aggregate", {{"mean_psnr", psnr_json(report.mean_psnr)}, {"mean_ssim", report.mean_ssim}}}};
  if (report.timing) j["timing"] = to_json(*report.timing);
  return j;
}

std::string format_table(const EvalReport& report) {
  std::size_t width = 4;
  for (const auto& s : report.per_image) width = std::max(width, s.id.size());
  std::ostringstream os;
  os << std::left << std::setw(static_cast<int>(width)) << "id" << "  " << std::right << std::setw(10)
     << "PSNR (dB)" << "  " << std::setw(8) << "SSIM" << "\n";
  for (const auto& s : report.per_image) {
    os << std::left << std::setw(static_cast<int>(width)) << s.id << "  " << std::right << std::setw(10)
       << json_number_or_inf(s.psnr_db) << "  " << std::setw(8) << std::fixed << std::setprecision(4) << s.ssim
       << "\n";
  }
  os << std::left << std::setw(static_cast<int>(width)) << "mean" << "  " << std::right << std::setw(10)
     << json_number_or_inf(report.mean_psnr) << "  " << std::setw(8) << std::fixed << std::setprecision(4)
     << report.mean_ssim << "\n";
  return os.str();
}

std::string cpu_device_label() {
  std::ifstream in("/proc/cpuinfo");
  std::string line;
  while (std::getline(in, line)) {
    if (line.rfind("model name", 0) == 0) {
      const auto colon = line.find(':');
      if (colon != std::string::npos) {
        auto name = line.substr(colon + 1);
        name.erase(0, name.find_first_not_of(' '));
        return "cpu: " + name;
      }
    }
  }
  return "cpu";
}

TimingRecord bench_inference(const Weights& w, const NetworkConfig& cfg, int height, int width, int warmup,
                             int runs, std::uint64_t seed) {
  if (runs < 1) throw InvalidParameter("bench needs at least one measured run");
  if (warmup < 0) throw InvalidParameter("warmup runs must be >= 0");
  if (height < 1 || width < 1) throw InvalidParameter("bench image size must be positive");

  TimingRecord record;
  record.height = height;
  record.width = width;
  record.warmup_runs = warmup;
  record.measured_runs = runs;
  record.device_label = cpu_device_label();

  Rng rng(seed);
  Image input(height, width, cfg.image_channels);
  for (float& v : input.data()) v = static_cast<float>(rng.uniform());

  using clock = std::chrono::steady_clock;
  for (int i = 0; i < warmup; ++i) (void)derain(input, w, cfg);
  for (int i = 0; i < runs; ++i) {
    const auto t0 = clock::now();
    (void)derain(input, w, cfg);
    record.seconds.push_back(std::chrono::duration<double>(clock::now() - t0).count());
  }
  std::vector<double> sorted = record.seconds;
  std::sort(sorted.begin(), sorted.end());
  const std::size_t m = sorted.size();
  record.median_seconds = m % 2 ? sorted[m / 2] : 0.5 * (sorted[m / 2 - 1] + sorted[m / 2]);
  record.mean_seconds = std::accumulate(sorted.begin(), sorted.end(), 0.0) / static_cast<double>(m);
  return record;
}

}  // namespace ddc
