#include "mmanet/annotation_geometry.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <set>
#include <sstream>

#include <Eigen/Dense>
#include <nlohmann/json.hpp>

namespace mmanet::geometry {
namespace {

using nlohmann::json;

const json& require(const json& obj, const char* key, const std::string& where) {
  if (!obj.is_object() || !obj.contains(key)) {
    throw ParseError(where + ": missing key '" + key + "'");
  }
  return obj.at(key);
}

int require_int(const json& obj, const char* key, const std::string& where) {
  const json& v = require(obj, key, where);
  if (!v.is_number_integer()) {
    throw ParseError(where + ": key '" + key + "' must be an integer");
  }
  return v.get<int>();
}

std::vector<Point2> parse_points(const json& pts, const std::string& where) {
  if (!pts.is_array()) throw ParseError(where + ": key 'points' must be an array");
  std::vector<Point2> out;
  out.reserve(pts.size());
  for (const auto& p : pts) {
    if (!p.is_array() || p.size() != 2 || !p[0].is_number() || !p[1].is_number()) {
      throw ParseError(where + ": key 'points' must hold [x, y] number pairs");
    }
    out.push_back({p[0].get<double>(), p[1].get<double>()});
  }
  std::stable_sort(out.begin(), out.end(),
                   [](const Point2& a, const Point2& b) { return a.y < b.y; });
  return out;
}

void validate_lanes(const FrameAnnotation& frame) {
  std::set<int> seen;
  for (const auto& lane : frame.lanes) {
    if (lane.lane_id < 1 || lane.lane_id > kMaxLaneLabel) {
      throw ValidationError("frame " + std::to_string(frame.frame_index) +
                            ": lane id " + std::to_string(lane.lane_id) +
                            " outside 1..8");
    }
    if (!seen.insert(lane.lane_id).second) {
      throw ValidationError("frame " + std::to_string(frame.frame_index) +
                            ": duplicate lane id " + std::to_string(lane.lane_id));
    }
  }
}

json parse_json_text(const std::string& text) {
  try {
    return json::parse(text);
  } catch (const json::parse_error& e) {
    throw ParseError(std::string("invalid JSON: ") + e.what());
  }
}

std::string read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

}  // namespace

const char* line_type_name(LineType type) {
  static constexpr const char* kNames[kNumLineTypes] = {
      "single white solid",       "single white dotted",
      "single yellow solid",      "single yellow dotted",
      "double white solid",       "double yellow solid",
      "double yellow dotted",     "double white solid dotted",
      "double white dotted solid", "double solid white and yellow"};
  return kNames[static_cast<int>(type)];
}

bool is_dotted(LineType type) {
  switch (type) {
    case LineType::kSingleWhiteDotted:
    case LineType::kSingleYellowDotted:
    case LineType::kDoubleYellowDotted:
      return true;
    default:
      return false;
  }
}

bool is_yellow(LineType type) {
  switch (type) {
    case LineType::kSingleYellowSolid:
    case LineType::kSingleYellowDotted:
    case LineType::kDoubleYellowSolid:
    case LineType::kDoubleYellowDotted:
      return true;
    default:
      return false;
  }
}

int lane_width_px(int frame_height) {
  const double scaled = 30.0 * frame_height / 1080.0;
  const int even = 2 * static_cast<int>(std::lround(scaled / 2.0));
  return std::max(2, even);
}

FrameAnnotation parse_annotation_json(const std::string& text) {
  const json doc = parse_json_text(text);
  FrameAnnotation frame;
  frame.frame_index = require_int(doc, "frame", "annotation");
  const std::string where = "frame " + std::to_string(frame.frame_index);
  const json& lanes = require(doc, "lanes", where);
  if (!lanes.is_array()) throw ParseError(where + ": key 'lanes' must be an array");
  for (const auto& item : lanes) {
    ControlPointSet lane;
    lane.lane_id = require_int(item, "id", where);
    const int type = require_int(item, "line_type", where);
    if (type < 0 || type >= kNumLineTypes) {
      throw ParseError(where + ": key 'line_type' outside 0..9");
    }
    lane.line_type = static_cast<LineType>(type);
    lane.points = parse_points(require(item, "points", where), where);
    frame.lanes.push_back(std::move(lane));
  }
  if (doc.contains("scenarios")) {
    const json& sc = doc.at("scenarios");
    if (!sc.is_array()) throw ParseError(where + ": key 'scenarios' must be an array");
    for (const auto& s : sc) {
      if (!s.is_number_integer() || s.get<int>() < 0 || s.get<int>() >= kNumScenarios) {
        throw ParseError(where + ": key 'scenarios' must hold ids in 0..9");
      }
      frame.scenarios.push_back(s.get<int>());
    }
  }
  validate_lanes(frame);
  return frame;
}

FrameAnnotation parse_annotation_file(const std::filesystem::path& path) {
  try {
    return parse_annotation_json(read_file(path));
  } catch (const ParseError& e) {
    throw ParseError(path.string() + ": " + e.what());
  }
}

std::vector<FrameAnnotation> parse_annotation_dir(const std::filesystem::path& anno_dir) {
  if (!std::filesystem::is_directory(anno_dir)) {
    throw IoError("missing annotation directory " + anno_dir.string());
  }
  std::vector<std::filesystem::path> files;
  for (const auto& entry : std::filesystem::directory_iterator(anno_dir)) {
    if (entry.is_regular_file() && entry.path().extension() == ".json") {
      files.push_back(entry.path());
    }
  }
  std::sort(files.begin(), files.end());
  std::vector<FrameAnnotation> out;
  out.reserve(files.size());
  for (const auto& f : files) out.push_back(parse_annotation_file(f));
  return out;
}

std::string to_annotation_json(const FrameAnnotation& frame) {
  json doc;
  doc["frame"] = frame.frame_index;
  doc["lanes"] = json::array();
  for (const auto& lane : frame.lanes) {
    json pts = json::array();
    for (const auto& p : lane.points) pts.push_back({p.x, p.y});
    doc["lanes"].push_back({{"id", lane.lane_id},
                            {"line_type", static_cast<int>(lane.line_type)},
                            {"points", std::move(pts)}});
  }
  if (!frame.scenarios.empty()) doc["scenarios"] = frame.scenarios;
  return doc.dump();
}

FrameAnnotation import_vil100_json(const std::string& text, int frame_index) {
  const json doc = parse_json_text(text);
  FrameAnnotation frame;
  frame.frame_index = frame_index;
  const std::string where = "vil100 frame " + std::to_string(frame_index);
  const json& annotations = require(doc, "annotations", where);
  if (!annotations.contains("lane")) return frame;  // crossroad frames carry no lanes
  const json& lanes = annotations.at("lane");
  if (!lanes.is_array()) throw ParseError(where + ": key 'lane' must be an array");
  for (const auto& item : lanes) {
    ControlPointSet lane;
    lane.lane_id = require_int(item, "lane_id", where);
    const int attribute = item.contains("attribute") ? item.at("attribute").get<int>() : 1;
    if (attribute < 1 || attribute > kNumLineTypes) {
      throw ParseError(where + ": key 'attribute' outside 1..10");
    }
    lane.line_type = static_cast<LineType>(attribute - 1);
    lane.points = parse_points(require(item, "points", where), where);
    frame.lanes.push_back(std::move(lane));
  }
  validate_lanes(frame);
  return frame;
}

LanePolynomial fit_lane_polynomial(const ControlPointSet& lane) {
  const auto& pts = lane.points;
  std::set<double> rows;
  for (const auto& p : pts) {
    if (!std::isfinite(p.x) || !std::isfinite(p.y)) {
      throw DegenerateGeometryError("non-finite control point");
    }
    rows.insert(p.y);
  }
  if (rows.size() < 4) {
    throw DegenerateGeometryError("cubic fit needs 4 distinct rows, got " +
                                  std::to_string(rows.size()));
  }

  // Solve in a centred, scaled variable u = (y - c) / s, then expand back to
  // monomials in y.
  const double lo = *rows.begin();
  const double hi = *rows.rbegin();
  const double c = 0.5 * (lo + hi);
  const double s = std::max(0.5 * (hi - lo), 1e-12);

  const Eigen::Index n = static_cast<Eigen::Index>(pts.size());
  Eigen::MatrixXd a(n, 4);
  Eigen::VectorXd b(n);
  for (Eigen::Index i = 0; i < n; ++i) {
    const double u = (pts[i].y - c) / s;
    a(i, 0) = 1.0;
    a(i, 1) = u;
    a(i, 2) = u * u;
    a(i, 3) = u * u * u;
    b(i) = pts[i].x;
  }
  Eigen::ColPivHouseholderQR<Eigen::MatrixXd> qr(a);
  if (qr.rank() < 4) throw DegenerateGeometryError("rank-deficient cubic fit");
  const Eigen::Vector4d scaled = qr.solve(b);

  // (y - c)^k = sum_j C(k, j) y^j (-c)^(k-j)
  static constexpr double kBinom[4][4] = {
      {1, 0, 0, 0}, {1, 1, 0, 0}, {1, 2, 1, 0}, {1, 3, 3, 1}};
  LanePolynomial poly;
  for (int k = 0; k < 4; ++k) {
    const double bk = scaled(k) / std::pow(s, k);
    for (int j = 0; j <= k; ++j) {
      poly.coeffs[j] += bk * kBinom[k][j] * std::pow(-c, k - j);
    }
  }
  for (double v : poly.coeffs) {
    if (!std::isfinite(v)) throw DegenerateGeometryError("non-finite coefficients");
  }
  poly.y_min = lo;
  poly.y_max = hi;
  return poly;
}

void rasterize_lane(const LanePolynomial& poly, int label, InstanceMask& mask) {
  if (label < 1 || label > kMaxLaneLabel) {
    throw ValidationError("lane label " + std::to_string(label) + " outside 1..8");
  }
  if (mask.width() <= 0 || mask.height() <= 0) {
    throw ValidationError("frame size must be positive");
  }
  const int width = lane_width_px(mask.height());
  const double half = width / 2.0;
  const int row_begin = std::max(0, static_cast<int>(std::ceil(poly.y_min)));
  const int row_end = std::min(mask.height() - 1, static_cast<int>(std::floor(poly.y_max)));
  for (int y = row_begin; y <= row_end; ++y) {
    const double x = poly(y);
    if (!std::isfinite(x)) continue;
    const double first = std::ceil(x - half);
    const int c0 = static_cast<int>(std::clamp(first, -1.0, double(mask.width())));
    const int c1 = static_cast<int>(std::clamp(first + width, -1.0, double(mask.width())));
    for (int col = std::max(0, c0); col < std::min(mask.width(), c1); ++col) {
      mask.at(col, y) = static_cast<std::uint8_t>(label);
    }
  }
}

InstanceMask frame_to_instance_mask(const FrameAnnotation& frame, FrameSize size) {
  InstanceMask mask(size.width, size.height);
  std::vector<const ControlPointSet*> order;
  for (const auto& lane : frame.lanes) order.push_back(&lane);
  std::stable_sort(order.begin(), order.end(),
                   [](auto* a, auto* b) { return a->lane_id < b->lane_id; });
  for (const auto* lane : order) {
    try {
      rasterize_lane(fit_lane_polynomial(*lane), lane->lane_id, mask);
    } catch (const DegenerateGeometryError& e) {
      throw DegenerateGeometryError("frame " + std::to_string(frame.frame_index) +
                                    ", lane " + std::to_string(lane->lane_id) + ": " +
                                    e.what());
    } catch (const ValidationError& e) {
      throw ValidationError("frame " + std::to_string(frame.frame_index) + ": " + e.what());
    }
  }
  return mask;
}

std::vector<InstanceMask> frames_to_instance_masks(
    const std::vector<FrameAnnotation>& frames, FrameSize size, int num_frames) {
  std::vector<InstanceMask> masks(num_frames, InstanceMask(size.width, size.height));
  for (const auto& frame : frames) {
    if (frame.frame_index < 0 || frame.frame_index >= num_frames) {
      throw ValidationError("annotation frame index " + std::to_string(frame.frame_index) +
                            " outside clip of " + std::to_string(num_frames) + " frames");
    }
    masks[frame.frame_index] = frame_to_instance_mask(frame, size);
  }
  return masks;
}

std::vector<FrameAnnotation> import_vil100_dir(const std::filesystem::path& dir) {
  if (!std::filesystem::is_directory(dir)) {
    throw IoError("missing annotation directory " + dir.string());
  }
  std::vector<std::filesystem::path> files;
  for (const auto& entry : std::filesystem::directory_iterator(dir)) {
    if (entry.is_regular_file() && entry.path().extension() == ".json") {
      files.push_back(entry.path());
    }
  }
  std::sort(files.begin(), files.end());
  std::vector<FrameAnnotation> out;
  for (std::size_t i = 0; i < files.size(); ++i) {
    try {
      out.push_back(import_vil100_json(read_file(files[i]), static_cast<int>(i)));
    } catch (const ParseError& e) {
      throw ParseError(files[i].string() + ": " + e.what());
    }
  }
  return out;
}

DatasetStats stats_from_annotations(const std::vector<FrameAnnotation>& frames) {
  DatasetStats stats;
  for (const auto& frame : frames) {
    ++stats.frames;
    const auto n = std::min<std::size_t>(frame.lanes.size(), kMaxLaneLabel);
    ++stats.frames_per_lane_count[n];
    for (const auto& lane : frame.lanes) {
      ++stats.lanes;
      ++stats.line_type_counts[static_cast<int>(lane.line_type)];
    }
    for (int s : frame.scenarios) ++stats.scenario_counts[s];
  }
  return stats;
}

DatasetStats compute_dataset_stats(const std::filesystem::path& root) {
  if (!std::filesystem::is_directory(root)) {
    throw IoError("dataset root " + root.string() + " is not a directory");
  }
  // Original release layout: root/Json/<video>/<frame>.jpg.json.
  const bool release_layout = std::filesystem::is_directory(root / "Json");
  const auto video_root = release_layout ? root / "Json" : root;
  std::vector<std::filesystem::path> videos;
  for (const auto& entry : std::filesystem::directory_iterator(video_root)) {
    if (entry.is_directory()) videos.push_back(entry.path());
  }
  std::sort(videos.begin(), videos.end());

  DatasetStats total;
  for (const auto& video : videos) {
    const DatasetStats s = stats_from_annotations(release_layout ? import_vil100_dir(video)
                                                                 : parse_annotation_dir(video / "anno"));
    for (std::size_t i = 0; i < s.frames_per_lane_count.size(); ++i) {
      total.frames_per_lane_count[i] += s.frames_per_lane_count[i];
    }
    for (std::size_t i = 0; i < s.line_type_counts.size(); ++i) {
      total.line_type_counts[i] += s.line_type_counts[i];
    }
    for (std::size_t i = 0; i < s.scenario_counts.size(); ++i) {
      total.scenario_counts[i] += s.scenario_counts[i];
    }
    total.frames += s.frames;
    total.lanes += s.lanes;
    ++total.videos;
  }
  return total;
}

}  // namespace mmanet::geometry
