#include "mmanet/dataset.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <map>
#include <numbers>
#include <random>

#include "mmanet/image_io.hpp"

namespace mmanet::data {
namespace {

constexpr int kControlPointsPerLane = 8;
constexpr int kMaxSyntheticLanes = 6;

std::uint8_t mirrored_label(std::uint8_t label) {
  if (label == 0) return 0;
  return (label % 2 == 1) ? label + 1 : label - 1;
}

struct LaneTrack {
  int label = 0;
  double offset = 0.0;  // lane-spacing units, negative = left of ego
  geometry::LineType type = geometry::LineType::kSingleWhiteSolid;
};

struct Occluder {
  double x0 = 0, y0 = 0, w = 0, h = 0, vx = 0;
  float r = 0, g = 0, b = 0;
};

struct SceneDynamics {
  int horizon = 0;
  double ego_amp = 0, ego_period = 1, ego_phase = 0;
  double curv0 = 0, curv_amp = 0, curv_period = 1, cubic = 0;
  double vp_amp = 0, vp_period = 1;
  double dash_speed = 0, dash_freq = 0;
  double road_tone = 0.35;
};

double uniform(std::mt19937_64& rng, double lo, double hi) {
  return std::uniform_real_distribution<double>(lo, hi)(rng);
}

}  // namespace

void VideoClip::validate() const {
  if (frames.size() != masks.size()) {
    throw IntegrityError("clip " + id + ": " + std::to_string(frames.size()) + " frames but " +
                         std::to_string(masks.size()) + " masks");
  }
  const FrameSize size = frame_size();
  for (std::size_t i = 0; i < frames.size(); ++i) {
    if (frames[i].size() != size || masks[i].size() != size) {
      throw IntegrityError("clip " + id + ": frame " + std::to_string(i) +
                           " differs in size from frame 0");
    }
  }
}

VideoClip flip_horizontal(const VideoClip& clip) {
  VideoClip out = clip;
  for (std::size_t i = 0; i < clip.frames.size(); ++i) {
    const auto& src = clip.frames[i];
    const auto& msk = clip.masks[i];
    const int w = src.width();
    for (int y = 0; y < src.height(); ++y) {
      for (int x = 0; x < w; ++x) {
        for (int c = 0; c < 3; ++c) out.frames[i].at(x, y, c) = src.at(w - 1 - x, y, c);
        out.masks[i].at(x, y) = mirrored_label(msk.at(w - 1 - x, y));
      }
    }
  }
  return out;
}

void SyntheticSceneConfig::validate() const {
  if (n_lanes < 1 || n_lanes > kMaxSyntheticLanes) {
    throw ConfigError("n_lanes must be in 1..6, got " + std::to_string(n_lanes));
  }
  if (frame_size.width < 16 || frame_size.height < 16) {
    throw ConfigError("synthetic frame size must be at least 16x16");
  }
  if (length < 1) throw ConfigError("clip length must be >= 1");
  if (occluders < 0) throw ConfigError("occluder count must be >= 0");
  if (lane_spacing <= 0.0) throw ConfigError("lane spacing must be positive");
  if (noise < 0.0 || haze < 0.0 || haze > 1.0 || brightness <= 0.0) {
    throw ConfigError("noise >= 0, haze in [0, 1] and brightness > 0 required");
  }
}

SyntheticClip generate_synthetic_clip(const SyntheticSceneConfig& cfg) {
  cfg.validate();
  const int W = cfg.frame_size.width;
  const int H = cfg.frame_size.height;

  // Separate streams keep lane geometry independent of occluder and noise
  // settings.
  std::mt19937_64 scene_rng(cfg.seed);
  std::mt19937_64 occluder_rng(cfg.seed ^ 0x9e3779b97f4a7c15ULL);
  std::mt19937_64 noise_rng(cfg.seed ^ 0xc2b2ae3d27d4eb4fULL);
  constexpr double kTwoPi = 2.0 * std::numbers::pi;

  SceneDynamics dyn;
  dyn.horizon = static_cast<int>(std::lround(0.35 * H));
  dyn.ego_amp = uniform(scene_rng, 0.03, 0.15);
  dyn.ego_period = uniform(scene_rng, 15.0, 40.0);
  dyn.ego_phase = uniform(scene_rng, 0.0, kTwoPi);
  dyn.curv0 = uniform(scene_rng, -1.0, 1.0) * cfg.curvature_px;
  dyn.curv_amp = uniform(scene_rng, 0.0, 0.5) * cfg.curvature_px;
  dyn.curv_period = uniform(scene_rng, 20.0, 60.0);
  dyn.cubic = uniform(scene_rng, -0.3, 0.3) * cfg.curvature_px;
  dyn.vp_amp = uniform(scene_rng, 0.0, 0.04) * W;
  dyn.vp_period = uniform(scene_rng, 25.0, 70.0);
  dyn.dash_speed = uniform(scene_rng, 0.08, 0.25);
  dyn.dash_freq = uniform(scene_rng, 0.8, 1.6);
  dyn.road_tone = uniform(scene_rng, 0.28, 0.4);

  std::vector<LaneTrack> lanes;
  const int n_left = (cfg.n_lanes + 1) / 2;
  const int n_right = cfg.n_lanes / 2;
  std::uniform_int_distribution<int> type_dist(0, geometry::kNumLineTypes - 1);
  for (int j = 1; j <= n_left; ++j) {
    lanes.push_back({2 * j - 1, -(j - 0.5), static_cast<geometry::LineType>(type_dist(scene_rng))});
  }
  for (int j = 1; j <= n_right; ++j) {
    lanes.push_back({2 * j, j - 0.5, static_cast<geometry::LineType>(type_dist(scene_rng))});
  }
  std::sort(lanes.begin(), lanes.end(),
            [](const LaneTrack& a, const LaneTrack& b) { return a.label < b.label; });

  std::vector<Occluder> occluders;
  for (int k = 0; k < cfg.occluders; ++k) {
    Occluder o;
    o.w = uniform(occluder_rng, 0.22, 0.32) * W;
    o.h = uniform(occluder_rng, 0.25, 0.35) * H;
    const double road_rows = H - dyn.horizon;
    o.y0 = uniform(occluder_rng, dyn.horizon + 0.35 * road_rows, H - o.h);
    const bool rightward = occluder_rng() % 2 == 0;
    const double travel = (W + o.w) * uniform(occluder_rng, 0.9, 1.3);
    o.vx = (rightward ? 1.0 : -1.0) * travel / std::max(1, cfg.length - 1);
    o.x0 = rightward ? -o.w + uniform(occluder_rng, 0.0, 0.2) * W
                     : W - uniform(occluder_rng, 0.0, 0.2) * W;
    o.r = static_cast<float>(uniform(occluder_rng, 0.05, 0.6));
    o.g = static_cast<float>(uniform(occluder_rng, 0.05, 0.4));
    o.b = static_cast<float>(uniform(occluder_rng, 0.05, 0.6));
    occluders.push_back(o);
  }

  const int lane_width = geometry::lane_width_px(H);
  const double road_span = (H - 1) - dyn.horizon;
  const int top_row = dyn.horizon + 2;

  SyntheticClip out;
  out.clip.id = "synthetic_" + std::to_string(cfg.seed);
  out.clip.fps = 10.0;
  std::normal_distribution<float> noise(0.0f, static_cast<float>(cfg.noise));

  for (int t = 0; t < cfg.length; ++t) {
    const double ego = dyn.ego_amp * std::sin(kTwoPi * t / dyn.ego_period + dyn.ego_phase);
    const double curv = dyn.curv0 + dyn.curv_amp * std::sin(kTwoPi * t / dyn.curv_period);
    const double vp = 0.5 * W + dyn.vp_amp * std::sin(kTwoPi * t / dyn.vp_period);
    const double spacing = cfg.lane_spacing * W;

    auto lane_x = [&](const LaneTrack& lane, double y) {
      const double s = (y - dyn.horizon) / road_span;
      const double far = 1.0 - s;
      return vp + curv * far * far + dyn.cubic * far * far * far + (lane.offset - ego) * spacing * s;
    };

    geometry::FrameAnnotation anno;
    anno.frame_index = t;
    for (const auto& lane : lanes) {
      geometry::ControlPointSet cps;
      cps.lane_id = lane.label;
      cps.line_type = lane.type;
      for (int j = 0; j < kControlPointsPerLane; ++j) {
        const double y = top_row + j * double(H - 1 - top_row) / (kControlPointsPerLane - 1);
        const double x = lane_x(lane, y);
        if (x >= 0.0 && x < W) cps.points.push_back({x, y});
      }
      if (cps.points.size() >= 4) anno.lanes.push_back(std::move(cps));
    }
    InstanceMask mask = geometry::frame_to_instance_mask(anno, cfg.frame_size);

    // Paint follows the same fitted curves as the mask, minus dash gaps and
    // the centre gap of double lines.
    InstanceMask paint(W, H);
    for (const auto& cps : anno.lanes) {
      const auto poly = geometry::fit_lane_polynomial(cps);
      const bool dotted = geometry::is_dotted(cps.line_type);
      const bool doubled = static_cast<int>(cps.line_type) >= 4 && lane_width >= 6;
      const int r0 = std::max(0, static_cast<int>(std::ceil(poly.y_min)));
      const int r1 = std::min(H - 1, static_cast<int>(std::floor(poly.y_max)));
      for (int y = r0; y <= r1; ++y) {
        const double s = std::max((y - dyn.horizon) / road_span, 0.05);
        if (dotted) {
          const double phase = std::fmod(dyn.dash_freq / s + dyn.dash_speed * t, 1.0);
          if (phase > 0.6) continue;
        }
        const int c0 = static_cast<int>(std::ceil(poly(y) - lane_width / 2.0));
        for (int k = 0; k < lane_width; ++k) {
          if (doubled && k >= lane_width / 3 && k < lane_width - lane_width / 3) continue;
          const int x = c0 + k;
          if (x >= 0 && x < W) paint.at(x, y) = static_cast<std::uint8_t>(cps.lane_id);
        }
      }
    }
    std::map<int, geometry::LineType> type_of;
    for (const auto& cps : anno.lanes) type_of[cps.lane_id] = cps.line_type;

    RgbImage frame(W, H);
    InstanceMask visible = paint;
    for (int y = 0; y < H; ++y) {
      const double s = std::clamp((y - dyn.horizon) / road_span, 0.0, 1.0);
      for (int x = 0; x < W; ++x) {
        float r, g, b;
        if (y < dyn.horizon) {
          r = 0.55f; g = 0.65f; b = 0.8f;
        } else {
          const float tone = static_cast<float>(dyn.road_tone * (0.85 + 0.3 * s));
          r = tone; g = tone; b = tone * 1.03f;
          if (const int lab = paint.at(x, y); lab != 0) {
            if (geometry::is_yellow(type_of[lab])) {
              r = 0.95f; g = 0.8f; b = 0.2f;
            } else {
              r = 0.95f; g = 0.95f; b = 0.95f;
            }
          }
        }
        for (const auto& o : occluders) {
          const double ox = o.x0 + o.vx * t;
          if (x >= ox && x < ox + o.w && y >= o.y0 && y < o.y0 + o.h) {
            r = o.r; g = o.g; b = o.b;
            visible.at(x, y) = 0;
          }
        }
        const float hz = static_cast<float>(cfg.haze * (y < dyn.horizon ? 1.0 : 1.0 - s));
        const float bright = static_cast<float>(cfg.brightness);
        auto finish = [&](float v) {
          v = (v * (1.0f - hz) + 0.7f * hz) * bright;
          if (cfg.noise > 0.0) v += noise(noise_rng);
          return std::clamp(v, 0.0f, 1.0f);
        };
        r = finish(r);
        g = finish(g);
        b = finish(b);
        frame.set(x, y, r, g, b);
      }
    }

    out.clip.frames.push_back(std::move(frame));
    out.clip.masks.push_back(std::move(mask));
    out.annotations.push_back(std::move(anno));
    out.visible_paint.push_back(std::move(visible));
  }
  return out;
}

std::vector<int> shuffle_video_index(int length, std::uint64_t seed) {
  if (length < 1) throw ValidationError("video length must be >= 1");
  std::vector<int> perm(length);
  for (int i = 0; i < length; ++i) perm[i] = i;
  std::mt19937_64 rng(seed);
  std::shuffle(perm.begin(), perm.end(), rng);
  return perm;
}

MemorySelection select_memory_frames(int length, int t, const std::vector<int>& permutation,
                                     int memory_size) {
  if (t < 0 || t >= length) {
    throw ValidationError("query index " + std::to_string(t) + " outside clip of length " +
                          std::to_string(length));
  }
  if (static_cast<int>(permutation.size()) != length) {
    throw ValidationError("permutation length does not match clip length");
  }
  if (memory_size < 1) throw ValidationError("memory size must be >= 1");

  MemorySelection sel;
  sel.query_index = t;
  sel.memory_size = memory_size;
  sel.shuffle_permutation = permutation;

  const auto pos_it = std::find(permutation.begin(), permutation.end(), t);
  if (pos_it == permutation.end()) throw ValidationError("permutation does not contain t");
  const int pos = static_cast<int>(pos_it - permutation.begin());

  for (int k = memory_size; k >= 1; --k) {
    sel.local_indices.push_back(std::max(0, t - k));
    sel.global_indices.push_back(permutation[std::max(0, pos - k)]);
  }
  return sel;
}

std::string frame_stem(int index) {
  char buf[16];
  std::snprintf(buf, sizeof(buf), "%05d", index);
  return buf;
}

namespace {

std::map<std::string, std::filesystem::path> list_by_stem(
    const std::filesystem::path& dir, const std::vector<std::string>& extensions) {
  std::map<std::string, std::filesystem::path> out;
  if (!std::filesystem::is_directory(dir)) return out;
  for (const auto& entry : std::filesystem::directory_iterator(dir)) {
    if (!entry.is_regular_file()) continue;
    const auto ext = entry.path().extension().string();
    if (std::find(extensions.begin(), extensions.end(), ext) != extensions.end()) {
      out[entry.path().stem().string()] = entry.path();
    }
  }
  return out;
}

}  // namespace

namespace {

// "00012" -> "12"; non-numeric stems are kept as they are.
std::string frame_label(const std::string& stem) {
  const auto first = stem.find_first_not_of('0');
  if (first == std::string::npos) return stem.empty() ? stem : "0";
  return stem.substr(first);
}

}  // namespace

VideoClip load_vil100_clip(const std::filesystem::path& root, const std::string& video_id,
                           bool use_cached_masks) {
  const auto video_dir = root / video_id;
  if (!std::filesystem::is_directory(video_dir)) {
    throw IoError("missing video directory " + video_dir.string());
  }
  const auto frame_files = list_by_stem(video_dir / "frames", {".png", ".jpg", ".jpeg"});
  const auto anno_files = list_by_stem(video_dir / "anno", {".json"});
  if (frame_files.empty()) throw IoError("no frames under " + (video_dir / "frames").string());

  for (const auto& [stem, path] : frame_files) {
    if (!anno_files.count(stem)) {
      throw IntegrityError("clip " + video_id + ": frame " + frame_label(stem) +
                           " has no annotation");
    }
  }
  for (const auto& [stem, path] : anno_files) {
    if (!frame_files.count(stem)) {
      throw IntegrityError("clip " + video_id + ": annotation for frame " +
                           frame_label(stem) + " has no image");
    }
  }

  VideoClip clip;
  clip.id = video_id;
  for (const auto& [stem, path] : frame_files) {
    clip.frames.push_back(io::read_rgb(path));
    const FrameSize size = clip.frames.back().size();
    const auto cached = video_dir / "masks" / (stem + ".png");
    if (use_cached_masks && std::filesystem::exists(cached)) {
      clip.masks.push_back(io::read_mask(cached));
    } else {
      clip.masks.push_back(
          geometry::frame_to_instance_mask(geometry::parse_annotation_file(anno_files.at(stem)), size));
    }
  }
  clip.validate();
  return clip;
}

void write_clip(const std::filesystem::path& root, const VideoClip& clip,
                const std::vector<geometry::FrameAnnotation>& annotations) {
  clip.validate();
  const auto dir = root / clip.id;
  std::error_code ec;
  for (const char* sub : {"frames", "anno", "masks"}) {
    std::filesystem::create_directories(dir / sub, ec);
    if (ec) throw IoError("cannot create " + (dir / sub).string() + ": " + ec.message());
  }
  for (int t = 0; t < clip.length(); ++t) {
    const std::string stem = frame_stem(t);
    io::write_rgb(dir / "frames" / (stem + ".png"), clip.frames[t]);
    io::write_mask(dir / "masks" / (stem + ".png"), clip.masks[t]);
    geometry::FrameAnnotation anno;
    anno.frame_index = t;
    for (const auto& a : annotations) {
      if (a.frame_index == t) anno = a;
    }
    std::ofstream out(dir / "anno" / (stem + ".json"));
    if (!out) throw IoError("cannot write annotation for frame " + std::to_string(t));
    out << geometry::to_annotation_json(anno) << "\n";
  }
}

std::vector<std::string> read_split(const std::filesystem::path& split_file) {
  std::ifstream in(split_file);
  if (!in) throw IoError("cannot open split list " + split_file.string());
  std::vector<std::string> ids;
  std::string line;
  while (std::getline(in, line)) {
    while (!line.empty() && (line.back() == '\r' || line.back() == ' ')) line.pop_back();
    if (!line.empty()) ids.push_back(line);
  }
  return ids;
}

void write_split(const std::filesystem::path& split_file, const std::vector<std::string>& ids) {
  std::ofstream out(split_file);
  if (!out) throw IoError("cannot write split list " + split_file.string());
  for (const auto& id : ids) out << id << "\n";
}

}  // namespace mmanet::data
