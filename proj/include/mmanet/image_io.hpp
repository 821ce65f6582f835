#pragma once

#include <filesystem>

#include "mmanet/image.hpp"

namespace mmanet::io {

// 8-bit RGB (or grayscale, expanded) image scaled to [0, 1].
RgbImage read_rgb(const std::filesystem::path& path);
void write_rgb(const std::filesystem::path& path, const RgbImage& image);

// Single-channel 8-bit PNG whose pixel value is the instance label.
InstanceMask read_mask(const std::filesystem::path& path);
void write_mask(const std::filesystem::path& path, const InstanceMask& mask);

}  // namespace mmanet::io
