#include "ddcnet/image_io.hpp"

#include <algorithm>
#include <cctype>
#include <opencv2/core.hpp>
#include <opencv2/imgcodecs.hpp>
#include <opencv2/imgproc.hpp>

#include "ddcnet/errors.hpp"

namespace ddc {

namespace fs = std::filesystem;

Image load_image(const fs::path& path) {
  if (!fs::exists(path)) throw MissingFile("missing image file: " + path.string());
  cv::Mat raw;
  try {
    raw = cv::imread(path.string(), cv::IMREAD_UNCHANGED);
  } catch (const cv::Exception& e) {
    throw DecodeError("cannot decode image " + path.string() + ": " + e.what());
  }
  if (raw.empty()) throw DecodeError("cannot decode image " + path.string());

  if (raw.depth() != CV_8U && raw.depth() != CV_16U) {
    throw DecodeError("unsupported sample depth in " + path.string());
  }

  cv::Mat rgb;
  switch (raw.channels()) {
    case 1: rgb = raw; break;
    case 3: cv::cvtColor(raw, rgb, cv::COLOR_BGR2RGB); break;
    case 4: cv::cvtColor(raw, rgb, cv::COLOR_BGRA2RGB); break;
    default:
      throw DecodeError("unsupported channel count in " + path.string());
  }

  // Same mapping as quantize_8bit so that a PNG round trip is bit-exact.
  Image image(rgb.rows, rgb.cols, rgb.channels());
  auto samples = image.data();
  const std::size_t row = static_cast<std::size_t>(rgb.cols) * rgb.channels();
  for (int y = 0; y < rgb.rows; ++y) {
    float* dst = samples.data() + static_cast<std::size_t>(y) * row;
    if (rgb.depth() == CV_8U) {
      const auto* src = rgb.ptr<std::uint8_t>(y);
      for (std::size_t i = 0; i < row; ++i) dst[i] = static_cast<float>(src[i]) / 255.0f;
    } else {
      const auto* src = rgb.ptr<std::uint16_t>(y);
      for (std::size_t i = 0; i < row; ++i) dst[i] = static_cast<float>(src[i]) / 65535.0f;
    }
  }
  return image;
}

void save_png(const fs::path& path, const Image& image) {
  const int type = image.channels() == 1 ? CV_8UC1 : CV_8UC3;
  cv::Mat bytes(image.height(), image.width(), type);
  for (int y = 0; y < image.height(); ++y) {
    auto* dst = bytes.ptr<std::uint8_t>(y);
    for (int x = 0; x < image.width(); ++x) {
      for (int c = 0; c < image.channels(); ++c) {
        // OpenCV expects BGR order.
        const int src_c = image.channels() == 3 ? 2 - c : c;
        dst[x * image.channels() + c] = to_byte(image.at(y, x, src_c));
      }
    }
  }
  std::error_code ec;
  if (path.has_parent_path()) fs::create_directories(path.parent_path(), ec);
  bool ok = false;
  try {
    ok = cv::imwrite(path.string(), bytes);
  } catch (const cv::Exception& e) {
    throw IoError("cannot write " + path.string() + ": " + e.what());
  }
  if (!ok) throw IoError("cannot write " + path.string());
}

bool is_image_file(const fs::path& path) {
  std::string ext = path.extension().string();
  std::transform(ext.begin(), ext.end(), ext.begin(),
                 [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
  return ext == ".png" || ext == ".jpg" || ext == ".jpeg" || ext == ".bmp";
}

}  // namespace ddc
