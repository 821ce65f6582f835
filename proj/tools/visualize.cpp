#include "visualize.hpp"

#include <algorithm>
#include <cstdio>

#include <opencv2/imgcodecs.hpp>
#include <opencv2/imgproc.hpp>

#include "mmanet/errors.hpp"

namespace mmanet::viz {

const std::array<std::array<float, 3>, kNumClasses>& label_palette() {
  static const std::array<std::array<float, 3>, kNumClasses> kPalette{{
      {0.0f, 0.0f, 0.0f},
      {0.90f, 0.10f, 0.10f},
      {0.10f, 0.45f, 0.95f},
      {0.10f, 0.80f, 0.20f},
      {0.95f, 0.85f, 0.10f},
      {0.75f, 0.20f, 0.85f},
      {0.10f, 0.85f, 0.85f},
      {0.95f, 0.55f, 0.10f},
      {0.95f, 0.45f, 0.70f},
  }};
  return kPalette;
}

RgbImage overlay(const RgbImage& frame, const InstanceMask& mask, float alpha) {
  if (frame.size() != mask.size()) throw ShapeError("overlay: frame and mask sizes differ");
  RgbImage out = frame;
  const auto& palette = label_palette();
  for (int y = 0; y < mask.height(); ++y) {
    for (int x = 0; x < mask.width(); ++x) {
      const int l = mask.at(x, y);
      if (l == 0 || l >= kNumClasses) continue;
      for (int c = 0; c < 3; ++c) {
        out.at(x, y, c) = (1.0f - alpha) * frame.at(x, y, c) + alpha * palette[l][c];
      }
    }
  }
  return out;
}

void write_line_plot(const std::string& path, const std::vector<Series>& series,
                     const std::string& title) {
  constexpr int kW = 640, kH = 360, kLeft = 50, kRight = 140, kTop = 40, kBottom = 40;
  cv::Mat img(kH, kW, CV_8UC3, cv::Scalar(255, 255, 255));
  const int pw = kW - kLeft - kRight, ph = kH - kTop - kBottom;
  cv::rectangle(img, {kLeft, kTop}, {kLeft + pw, kTop + ph}, cv::Scalar(0, 0, 0));
  for (int k = 0; k <= 4; ++k) {
    const int y = kTop + ph - ph * k / 4;
    cv::line(img, {kLeft - 4, y}, {kLeft, y}, cv::Scalar(0, 0, 0));
    char label[16];
    std::snprintf(label, sizeof label, "%.2f", k / 4.0);
    cv::putText(img, label, {4, y + 4}, cv::FONT_HERSHEY_SIMPLEX, 0.4, cv::Scalar(0, 0, 0));
  }
  cv::putText(img, title, {kLeft, 24}, cv::FONT_HERSHEY_SIMPLEX, 0.55, cv::Scalar(0, 0, 0));
  cv::putText(img, "frame", {kLeft + pw / 2 - 20, kH - 10}, cv::FONT_HERSHEY_SIMPLEX, 0.45,
              cv::Scalar(0, 0, 0));

  const auto& palette = label_palette();
  for (std::size_t s = 0; s < series.size(); ++s) {
    const auto& rgb = palette[1 + s % (kNumClasses - 1)];
    const cv::Scalar colour(rgb[2] * 255, rgb[1] * 255, rgb[0] * 255);
    const auto& v = series[s].values;
    const std::size_t n = v.size();
    auto point = [&](std::size_t i) {
      const double fx = n > 1 ? double(i) / (n - 1) : 0.5;
      const double fy = std::clamp(v[i], 0.0, 1.0);
      return cv::Point(kLeft + static_cast<int>(fx * pw), kTop + ph - static_cast<int>(fy * ph));
    };
    for (std::size_t i = 0; i < n; ++i) {
      if (i > 0) cv::line(img, point(i - 1), point(i), colour, 2, cv::LINE_AA);
      cv::circle(img, point(i), 3, colour, cv::FILLED);
    }
    const int ly = kTop + 20 + static_cast<int>(s) * 22;
    cv::line(img, {kLeft + pw + 12, ly}, {kLeft + pw + 36, ly}, colour, 3);
    cv::putText(img, series[s].name, {kLeft + pw + 42, ly + 5}, cv::FONT_HERSHEY_SIMPLEX, 0.45,
                cv::Scalar(0, 0, 0));
  }
  if (!cv::imwrite(path, img)) throw IoError("cannot write plot " + path);
}

}  // namespace mmanet::viz
