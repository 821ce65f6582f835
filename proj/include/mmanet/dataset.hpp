#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "mmanet/annotation_geometry.hpp"
#include "mmanet/image.hpp"

namespace mmanet::data {

struct VideoClip {
  std::string id;
  std::vector<RgbImage> frames;
  std::vector<InstanceMask> masks;
  double fps = 10.0;

  int length() const { return static_cast<int>(frames.size()); }
  FrameSize frame_size() const { return frames.empty() ? FrameSize{} : frames.front().size(); }

  // Throws IntegrityError on length or size inconsistencies.
  void validate() const;
};

// Mirrors frames and masks left-right. Position labels swap sides, so each
// odd label 2i-1 becomes 2i and vice versa.
VideoClip flip_horizontal(const VideoClip& clip);

struct SyntheticSceneConfig {
  std::uint64_t seed = 0;
  int n_lanes = 2;
  // Peak lateral bend near the horizon, in px.
  double curvature_px = 8.0;
  // Lane spacing at the bottom row as a fraction of the frame width.
  double lane_spacing = 0.4;
  // Gaussian pixel noise standard deviation.
  double noise = 0.02;
  int occluders = 0;
  FrameSize frame_size{128, 64};
  int length = 20;
  double brightness = 1.0;
  double haze = 0.0;

  void validate() const;
};

struct SyntheticClip {
  VideoClip clip;
  std::vector<geometry::FrameAnnotation> annotations;
  // Lane paint that survives occlusion, labelled like the masks.
  std::vector<InstanceMask> visible_paint;
};

SyntheticClip generate_synthetic_clip(const SyntheticSceneConfig& cfg);

// Uniform random permutation of {0..T-1}, deterministic per seed.
std::vector<int> shuffle_video_index(int length, std::uint64_t seed);

struct MemorySelection {
  int query_index = 0;
  std::vector<int> local_indices;
  std::vector<int> global_indices;
  std::vector<int> shuffle_permutation;
  int memory_size = 5;
};

// Local memory: the N original-order frames before t. Global memory: the N
// entries before t's position in the shuffled sequence. Missing predecessors
// repeat the earliest available entry (frame t itself when t has none).
MemorySelection select_memory_frames(int length, int t, const std::vector<int>& permutation,
                                     int memory_size = 5);

// Canonical on-disk layout:
//   root/<video>/frames/%05d.png
//   root/<video>/anno/%05d.json
//   root/<video>/masks/%05d.png   (optional cache)
std::string frame_stem(int index);

VideoClip load_vil100_clip(const std::filesystem::path& root, const std::string& video_id,
                           bool use_cached_masks = true);

void write_clip(const std::filesystem::path& root, const VideoClip& clip,
                const std::vector<geometry::FrameAnnotation>& annotations);

std::vector<std::string> read_split(const std::filesystem::path& split_file);
void write_split(const std::filesystem::path& split_file, const std::vector<std::string>& ids);

}  // namespace mmanet::data
