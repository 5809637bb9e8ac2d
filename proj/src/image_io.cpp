#include "onfire/image_io.hpp"

#include <algorithm>
#include <cctype>
#include <opencv2/imgcodecs.hpp>
#include <opencv2/imgproc.hpp>

#include "onfire/errors.hpp"

namespace onfire {

namespace {

std::string lower_ext(const std::filesystem::path& p) {
  std::string e = p.extension().string();
  std::transform(e.begin(), e.end(), e.begin(), [](unsigned char c) { return std::tolower(c); });
  return e;
}

}  // namespace

std::optional<Image> try_load_image(const std::filesystem::path& path) {
  cv::Mat bgr = cv::imread(path.string(), cv::IMREAD_COLOR);
  if (bgr.empty()) return std::nullopt;
  cv::Mat rgb;
  cv::cvtColor(bgr, rgb, cv::COLOR_BGR2RGB);
  Image img(rgb.rows, rgb.cols, 3);
  for (int y = 0; y < rgb.rows; ++y) {
    const auto* row = rgb.ptr<unsigned char>(y);
    for (int i = 0; i < rgb.cols * 3; ++i) {
      img.data[static_cast<std::size_t>(y) * rgb.cols * 3 + i] = row[i] / 255.0f;
    }
  }
  return img;
}

Image load_image(const std::filesystem::path& path) {
  auto img = try_load_image(path);
  if (!img) throw FormatError("cannot decode image '" + path.string() + "'");
  return std::move(*img);
}

void save_image(const Image& image, const std::filesystem::path& path) {
  if (image.channels != 3) throw ContractError("save_image expects 3 channels");
  cv::Mat rgb(image.height, image.width, CV_8UC3);
  for (int y = 0; y < image.height; ++y) {
    auto* row = rgb.ptr<unsigned char>(y);
    for (int i = 0; i < image.width * 3; ++i) {
      const float v = image.data[static_cast<std::size_t>(y) * image.width * 3 + i];
      row[i] = static_cast<unsigned char>(std::clamp(v, 0.0f, 1.0f) * 255.0f + 0.5f);
    }
  }
  cv::Mat bgr;
  cv::cvtColor(rgb, bgr, cv::COLOR_RGB2BGR);
  if (!cv::imwrite(path.string(), bgr)) throw Error("cannot write image '" + path.string() + "'");
}

void save_label_image(const std::vector<int>& labels, int height, int width,
                      const std::filesystem::path& path) {
  if (labels.size() != static_cast<std::size_t>(height) * width) {
    throw ContractError("label image size mismatch");
  }
  cv::Mat m(height, width, CV_16UC1);
  for (int y = 0; y < height; ++y) {
    for (int x = 0; x < width; ++x) {
      const int v = labels[static_cast<std::size_t>(y) * width + x];
      if (v < 0 || v > 65535) throw ContractError("label out of 16-bit range");
      m.at<std::uint16_t>(y, x) = static_cast<std::uint16_t>(v);
    }
  }
  if (!cv::imwrite(path.string(), m)) throw Error("cannot write '" + path.string() + "'");
}

std::vector<int> load_label_image(const std::filesystem::path& path, int* height, int* width) {
  cv::Mat m = cv::imread(path.string(), cv::IMREAD_UNCHANGED);
  if (m.empty() || m.type() != CV_16UC1) {
    throw FormatError("'" + path.string() + "' is not a 16-bit label image");
  }
  std::vector<int> labels;
  labels.reserve(static_cast<std::size_t>(m.rows) * m.cols);
  for (int y = 0; y < m.rows; ++y) {
    for (int x = 0; x < m.cols; ++x) labels.push_back(m.at<std::uint16_t>(y, x));
  }
  if (height) *height = m.rows;
  if (width) *width = m.cols;
  return labels;
}

bool is_image_file(const std::filesystem::path& path) {
  static const char* exts[] = {".png", ".jpg", ".jpeg", ".bmp", ".tif", ".tiff", ".ppm", ".webp"};
  const std::string e = lower_ext(path);
  return std::any_of(std::begin(exts), std::end(exts), [&](const char* x) { return e == x; });
}

bool is_video_file(const std::filesystem::path& path) {
  static const char* exts[] = {".mp4", ".avi", ".mov", ".mkv", ".mpg", ".mpeg", ".webm"};
  const std::string e = lower_ext(path);
  return std::any_of(std::begin(exts), std::end(exts), [&](const char* x) { return e == x; });
}

std::vector<std::filesystem::path> list_images(const std::filesystem::path& dir) {
  std::vector<std::filesystem::path> out;
  for (const auto& entry : std::filesystem::directory_iterator(dir)) {
    if (entry.is_regular_file() && is_image_file(entry.path())) out.push_back(entry.path());
  }
  std::sort(out.begin(), out.end());
  return out;
}

}  // namespace onfire
