#include "mmanet/image_io.hpp"

#include <algorithm>
#include <cmath>

#include <opencv2/imgcodecs.hpp>

namespace mmanet::io {
namespace {

void ensure_parent(const std::filesystem::path& path) {
  if (path.has_parent_path()) {
    std::error_code ec;
    std::filesystem::create_directories(path.parent_path(), ec);
    if (ec) throw IoError("cannot create " + path.parent_path().string() + ": " + ec.message());
  }
}

}  // namespace

RgbImage read_rgb(const std::filesystem::path& path) {
  cv::Mat bgr = cv::imread(path.string(), cv::IMREAD_COLOR);
  if (bgr.empty()) throw IoError("cannot read image " + path.string());
  RgbImage out(bgr.cols, bgr.rows);
  for (int y = 0; y < bgr.rows; ++y) {
    const auto* row = bgr.ptr<cv::Vec3b>(y);
    for (int x = 0; x < bgr.cols; ++x) {
      out.set(x, y, row[x][2] / 255.0f, row[x][1] / 255.0f, row[x][0] / 255.0f);
    }
  }
  return out;
}

void write_rgb(const std::filesystem::path& path, const RgbImage& image) {
  ensure_parent(path);
  cv::Mat bgr(image.height(), image.width(), CV_8UC3);
  auto to_byte = [](float v) {
    return static_cast<uchar>(std::lround(std::clamp(v, 0.0f, 1.0f) * 255.0f));
  };
  for (int y = 0; y < image.height(); ++y) {
    auto* row = bgr.ptr<cv::Vec3b>(y);
    for (int x = 0; x < image.width(); ++x) {
      row[x] = {to_byte(image.at(x, y, 2)), to_byte(image.at(x, y, 1)),
                to_byte(image.at(x, y, 0))};
    }
  }
  if (!cv::imwrite(path.string(), bgr)) throw IoError("cannot write " + path.string());
}

InstanceMask read_mask(const std::filesystem::path& path) {
  cv::Mat m = cv::imread(path.string(), cv::IMREAD_UNCHANGED);
  if (m.empty()) throw IoError("cannot read mask " + path.string());
  if (m.type() != CV_8UC1) throw IoError(path.string() + " is not a single-channel 8-bit mask");
  InstanceMask out(m.cols, m.rows);
  for (int y = 0; y < m.rows; ++y) {
    const auto* row = m.ptr<uchar>(y);
    for (int x = 0; x < m.cols; ++x) {
      if (row[x] > kMaxLaneLabel) {
        throw ValidationError(path.string() + ": label " + std::to_string(row[x]) + " outside 0..8");
      }
      out.at(x, y) = row[x];
    }
  }
  return out;
}

void write_mask(const std::filesystem::path& path, const InstanceMask& mask) {
  ensure_parent(path);
  cv::Mat m(mask.height(), mask.width(), CV_8UC1,
            const_cast<std::uint8_t*>(mask.data().data()));
  if (!cv::imwrite(path.string(), m)) throw IoError("cannot write " + path.string());
}

}  // namespace mmanet::io
