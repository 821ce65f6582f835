#pragma once

#include <array>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "mmanet/image.hpp"

namespace mmanet::geometry {

inline constexpr int kNumLineTypes = 10;
inline constexpr int kNumScenarios = 10;

enum class LineType : int {
  kSingleWhiteSolid = 0,
  kSingleWhiteDotted,
  kSingleYellowSolid,
  kSingleYellowDotted,
  kDoubleWhiteSolid,
  kDoubleYellowSolid,
  kDoubleYellowDotted,
  kDoubleWhiteSolidDotted,
  kDoubleWhiteDottedSolid,
  kDoubleSolidWhiteYellow,
};

const char* line_type_name(LineType type);
bool is_dotted(LineType type);
bool is_yellow(LineType type);

struct Point2 {
  double x = 0.0;
  double y = 0.0;
};

// Centre-line points of one annotated lane in one frame.
struct ControlPointSet {
  std::vector<Point2> points;
  int lane_id = 0;
  LineType line_type = LineType::kSingleWhiteSolid;
};

struct FrameAnnotation {
  int frame_index = 0;
  std::vector<ControlPointSet> lanes;
  std::vector<int> scenarios;  // optional metadata, ids in [0, 10)
};

// x(y) = a0 + a1*y + a2*y^2 + a3*y^3, valid for y in [y_min, y_max].
struct LanePolynomial {
  std::array<double, 4> coeffs{};
  double y_min = 0.0;
  double y_max = 0.0;

  double operator()(double y) const {
    return coeffs[0] + y * (coeffs[1] + y * (coeffs[2] + y * coeffs[3]));
  }
  bool contains(double y) const { return y >= y_min && y <= y_max; }
};

// Lane band width in pixels for a frame of the given height: 30 px at 1080
// rows, scaled with height and rounded to the nearest even integer >= 2.
int lane_width_px(int frame_height);

// Parses one canonical per-frame annotation file:
//   {"frame": int, "lanes": [{"id": int, "line_type": int, "points": [[x,y],...]}],
//    "scenarios": [int, ...]}            ("scenarios" optional)
// Points come back sorted by increasing y.
FrameAnnotation parse_annotation_json(const std::string& text);
FrameAnnotation parse_annotation_file(const std::filesystem::path& path);

// Reads every *.json under `anno_dir` in lexicographic order.
std::vector<FrameAnnotation> parse_annotation_dir(const std::filesystem::path& anno_dir);

std::string to_annotation_json(const FrameAnnotation& frame);

// Converts a VIL-100 release annotation (the `annotations.lane` array with
// `lane_id`, `attribute` 1..10 and `points`) to the canonical form.
FrameAnnotation import_vil100_json(const std::string& text, int frame_index);

// Unweighted least-squares cubic x(y). Throws DegenerateGeometryError when
// fewer than four distinct rows are present.
LanePolynomial fit_lane_polynomial(const ControlPointSet& lane);

// Paints `label` into `mask` for every row inside the polynomial's y-range:
// the run of `lane_width_px(H)` columns centred on x(y). Later calls overwrite
// earlier ones.
void rasterize_lane(const LanePolynomial& poly, int label, InstanceMask& mask);

// Fits and rasterizes each lane in ascending lane_id order.
InstanceMask frame_to_instance_mask(const FrameAnnotation& frame, FrameSize size);

// One mask per frame index in [0, num_frames); frames without an annotation
// entry yield all-zero masks.
std::vector<InstanceMask> frames_to_instance_masks(
    const std::vector<FrameAnnotation>& frames, FrameSize size, int num_frames);

struct DatasetStats {
  std::array<long, kMaxLaneLabel + 1> frames_per_lane_count{};
  std::array<long, kNumLineTypes> line_type_counts{};
  std::array<long, kNumScenarios> scenario_counts{};
  long frames = 0;
  long lanes = 0;
  long videos = 0;
};

DatasetStats stats_from_annotations(const std::vector<FrameAnnotation>& frames);

// Imports every VIL-100 *.json under `dir`; frame indices follow file order.
std::vector<FrameAnnotation> import_vil100_dir(const std::filesystem::path& dir);

// Scans root/<video>/anno/*.json for every video directory, or
// root/Json/<video>/*.json when the original release layout is present.
DatasetStats compute_dataset_stats(const std::filesystem::path& root);

}  // namespace mmanet::geometry
