#pragma once

#include <array>
#include <string>
#include <vector>

#include "mmanet/image.hpp"

namespace mmanet::viz {

// Fixed RGB colour per position label; index 0 is unused.
const std::array<std::array<float, 3>, kNumClasses>& label_palette();

// Blends label colours over the frame; background pixels are left untouched.
RgbImage overlay(const RgbImage& frame, const InstanceMask& mask, float alpha = 0.6f);

struct Series {
  std::string name;
  std::vector<double> values;
};

// Line plot of per-frame values in [0, 1] written as a PNG.
void write_line_plot(const std::string& path, const std::vector<Series>& series,
                     const std::string& title);

}  // namespace mmanet::viz
