#pragma once

#include <cstdint>
#include <set>
#include <vector>

#include "mmanet/errors.hpp"

namespace mmanet {

struct FrameSize {
  int width = 0;
  int height = 0;

  friend bool operator==(const FrameSize&, const FrameSize&) = default;
};

// Maximum position label: 2i-1 / 2i for i = 1..4.
inline constexpr int kMaxLaneLabel = 8;
// Background plus eight position labels.
inline constexpr int kNumClasses = kMaxLaneLabel + 1;

// Integer label image; 0 is background, k in 1..8 a lane position label.
// Odd labels 2i-1 mark the i-th lane left of the ego vehicle, even labels 2i
// the i-th lane to its right.
class InstanceMask {
 public:
  InstanceMask() = default;
  InstanceMask(int width, int height, std::uint8_t fill = 0)
      : width_(width), height_(height),
        labels_(static_cast<std::size_t>(width) * height, fill) {
    if (width < 0 || height < 0) throw ShapeError("negative mask size");
  }

  int width() const { return width_; }
  int height() const { return height_; }
  FrameSize size() const { return {width_, height_}; }
  bool empty() const { return labels_.empty(); }

  std::uint8_t at(int x, int y) const { return labels_[index(x, y)]; }
  std::uint8_t& at(int x, int y) { return labels_[index(x, y)]; }

  const std::vector<std::uint8_t>& data() const { return labels_; }
  std::vector<std::uint8_t>& data() { return labels_; }

  // Labels with at least one pixel, background excluded.
  std::set<int> instance_labels() const {
    std::set<int> out;
    for (auto v : labels_) {
      if (v != 0) out.insert(v);
    }
    return out;
  }

  std::size_t count(int label) const {
    std::size_t n = 0;
    for (auto v : labels_) n += (v == label);
    return n;
  }

  friend bool operator==(const InstanceMask&, const InstanceMask&) = default;

 private:
  std::size_t index(int x, int y) const {
    return static_cast<std::size_t>(y) * width_ + x;
  }

  int width_ = 0;
  int height_ = 0;
  std::vector<std::uint8_t> labels_;
};

// Interleaved RGB image with float channels in [0, 1].
class RgbImage {
 public:
  RgbImage() = default;
  RgbImage(int width, int height, float fill = 0.0f)
      : width_(width), height_(height),
        pixels_(static_cast<std::size_t>(width) * height * 3, fill) {}

  int width() const { return width_; }
  int height() const { return height_; }
  FrameSize size() const { return {width_, height_}; }

  float at(int x, int y, int c) const { return pixels_[index(x, y) + c]; }
  float& at(int x, int y, int c) { return pixels_[index(x, y) + c]; }

  void set(int x, int y, float r, float g, float b) {
    auto i = index(x, y);
    pixels_[i] = r;
    pixels_[i + 1] = g;
    pixels_[i + 2] = b;
  }

  const std::vector<float>& data() const { return pixels_; }
  std::vector<float>& data() { return pixels_; }

  friend bool operator==(const RgbImage&, const RgbImage&) = default;

 private:
  std::size_t index(int x, int y) const {
    return (static_cast<std::size_t>(y) * width_ + x) * 3;
  }

  int width_ = 0;
  int height_ = 0;
  std::vector<float> pixels_;
};

}  // namespace mmanet
