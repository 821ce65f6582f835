#include "mmanet/metrics.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <iomanip>
#include <limits>
#include <numeric>
#include <sstream>

#include <nlohmann/json.hpp>

namespace mmanet::metrics {

std::vector<int> max_score_assignment(const std::vector<std::vector<double>>& score) {
  const int rows = static_cast<int>(score.size());
  const int cols = rows == 0 ? 0 : static_cast<int>(score[0].size());
  std::vector<int> result(rows, -1);
  if (rows == 0 || cols == 0) return result;

  // Shortest augmenting path with potentials on an n x m cost matrix, n <= m.
  const bool transposed = rows > cols;
  const int n = transposed ? cols : rows;
  const int m = transposed ? rows : cols;
  auto cost = [&](int i, int j) {
    return transposed ? -score[j - 1][i - 1] : -score[i - 1][j - 1];
  };
  constexpr double kInf = std::numeric_limits<double>::infinity();
  std::vector<double> u(n + 1, 0.0), v(m + 1, 0.0);
  std::vector<int> p(m + 1, 0), way(m + 1, 0);
  for (int i = 1; i <= n; ++i) {
    p[0] = i;
    int j0 = 0;
    std::vector<double> minv(m + 1, kInf);
    std::vector<bool> used(m + 1, false);
    do {
      used[j0] = true;
      const int i0 = p[j0];
      double delta = kInf;
      int j1 = 0;
      for (int j = 1; j <= m; ++j) {
        if (used[j]) continue;
        const double cur = cost(i0, j) - u[i0] - v[j];
        if (cur < minv[j]) {
          minv[j] = cur;
          way[j] = j0;
        }
        if (minv[j] < delta) {
          delta = minv[j];
          j1 = j;
        }
      }
      for (int j = 0; j <= m; ++j) {
        if (used[j]) {
          u[p[j]] += delta;
          v[j] -= delta;
        } else {
          minv[j] -= delta;
        }
      }
      j0 = j1;
    } while (p[j0] != 0);
    do {
      const int j1 = way[j0];
      p[j0] = p[j1];
      j0 = j1;
    } while (j0 != 0);
  }
  for (int j = 1; j <= m; ++j) {
    if (p[j] == 0) continue;
    if (transposed) {
      result[j - 1] = p[j] - 1;
    } else {
      result[p[j] - 1] = j - 1;
    }
  }
  return result;
}

InstanceMatching match_instances(const InstanceMask& pred, const InstanceMask& gt) {
  if (pred.size() != gt.size()) throw ShapeError("match_instances: mask sizes differ");
  std::vector<long> inter(256 * 256, 0);
  std::array<long, 256> pred_area{}, gt_area{};
  const auto& pd = pred.data();
  const auto& gd = gt.data();
  for (std::size_t i = 0; i < pd.size(); ++i) {
    ++pred_area[pd[i]];
    ++gt_area[gd[i]];
    ++inter[pd[i] * 256 + gd[i]];
  }
  std::vector<int> pl, gl;
  for (int l = 1; l < 256; ++l) {
    if (pred_area[l] > 0) pl.push_back(l);
    if (gt_area[l] > 0) gl.push_back(l);
  }

  std::vector<std::vector<double>> iou(pl.size(), std::vector<double>(gl.size(), 0.0));
  for (std::size_t i = 0; i < pl.size(); ++i) {
    for (std::size_t j = 0; j < gl.size(); ++j) {
      const long in = inter[pl[i] * 256 + gl[j]];
      const long un = pred_area[pl[i]] + gt_area[gl[j]] - in;
      iou[i][j] = un > 0 ? static_cast<double>(in) / un : 0.0;
    }
  }
  const auto assign = max_score_assignment(iou);

  InstanceMatching out;
  std::vector<bool> gt_used(gl.size(), false);
  for (std::size_t i = 0; i < pl.size(); ++i) {
    const int j = assign[i];
    if (j >= 0 && iou[i][j] > 0.0) {
      out.pairs.push_back({pl[i], gl[j], iou[i][j]});
      gt_used[j] = true;
    } else {
      out.unmatched_pred.push_back(pl[i]);
    }
  }
  for (std::size_t j = 0; j < gl.size(); ++j) {
    if (!gt_used[j]) out.unmatched_gt.push_back(gl[j]);
  }
  std::sort(out.pairs.begin(), out.pairs.end(),
            [](const InstancePair& a, const InstancePair& b) { return a.gt_label < b.gt_label; });
  return out;
}

double f1_at(const std::vector<InstanceMatching>& frames, double iou_threshold) {
  long tp = 0, n_pred = 0, n_gt = 0;
  for (const auto& m : frames) {
    for (const auto& p : m.pairs) tp += (p.iou > iou_threshold);
    n_pred += static_cast<long>(m.num_pred());
    n_gt += static_cast<long>(m.num_gt());
  }
  if (n_pred == 0 && n_gt == 0) return 1.0;
  const double precision = n_pred > 0 ? static_cast<double>(tp) / n_pred : 0.0;
  const double recall = n_gt > 0 ? static_cast<double>(tp) / n_gt : 0.0;
  if (precision + recall <= 0.0) return 0.0;
  return 2.0 * precision * recall / (precision + recall);
}

RegionScores region_metrics(const std::vector<InstanceMatching>& frames) {
  if (frames.empty()) throw ValidationError("region_metrics needs at least one frame");
  double iou_sum = 0.0;
  long n_pred = 0, n_gt = 0;
  for (const auto& m : frames) {
    for (const auto& p : m.pairs) iou_sum += p.iou;
    n_pred += static_cast<long>(m.num_pred());
    n_gt += static_cast<long>(m.num_gt());
  }
  RegionScores s;
  if (n_gt > 0) {
    s.miou = iou_sum / n_gt;
  } else {
    s.miou = n_pred == 0 ? 1.0 : 0.0;
  }
  s.f1_05 = f1_at(frames, 0.5);
  s.f1_08 = f1_at(frames, 0.8);
  return s;
}

Line mask_to_line(const InstanceMask& mask, int label, int row_stride) {
  if (row_stride < 1) throw ConfigError("row stride must be >= 1");
  Line line;
  for (int y = 0; y < mask.height(); y += row_stride) {
    long sum = 0, n = 0;
    for (int x = 0; x < mask.width(); ++x) {
      if (mask.at(x, y) == label) {
        sum += x;
        ++n;
      }
    }
    if (n > 0) line.push_back({y, static_cast<double>(sum) / n});
  }
  return line;
}

FrameLines mask_to_lines(const InstanceMask& mask, int row_stride) {
  FrameLines out;
  for (int label : mask.instance_labels()) {
    Line line = mask_to_line(mask, label, row_stride);
    if (!line.empty()) out.push_back({label, std::move(line)});
  }
  return out;
}

void LineConfig::validate() const {
  if (threshold_px <= 0.0) throw ConfigError("line threshold must be positive");
  if (lane_accuracy_gate < 0.0 || lane_accuracy_gate > 1.0) {
    throw ConfigError("lane accuracy gate must be in [0, 1]");
  }
  if (row_stride < 1) throw ConfigError("row stride must be >= 1");
}

LineCounts& LineCounts::operator+=(const LineCounts& o) {
  correct_points += o.correct_points;
  gt_points += o.gt_points;
  fp_lanes += o.fp_lanes;
  pred_lanes += o.pred_lanes;
  fn_lanes += o.fn_lanes;
  gt_lanes += o.gt_lanes;
  return *this;
}

LineScores LineCounts::scores() const {
  LineScores s;
  s.accuracy = gt_points > 0 ? static_cast<double>(correct_points) / gt_points : 1.0;
  s.fp = pred_lanes > 0 ? static_cast<double>(fp_lanes) / pred_lanes : 0.0;
  s.fn = gt_lanes > 0 ? static_cast<double>(fn_lanes) / gt_lanes : 0.0;
  return s;
}

namespace {

long correct_points(const Line& pred, const Line& gt, double threshold) {
  long n = 0;
  std::size_t k = 0;
  for (const auto& g : gt) {
    while (k < pred.size() && pred[k].y < g.y) ++k;
    if (k < pred.size() && pred[k].y == g.y && std::abs(pred[k].x - g.x) < threshold) ++n;
  }
  return n;
}

}  // namespace

LineCounts line_counts(const FrameLines& pred, const FrameLines& gt, const LineConfig& cfg) {
  cfg.validate();
  LineCounts c;
  c.pred_lanes = static_cast<long>(pred.size());
  c.gt_lanes = static_cast<long>(gt.size());
  for (const auto& g : gt) c.gt_points += static_cast<long>(g.points.size());

  std::vector<std::vector<long>> correct(pred.size(), std::vector<long>(gt.size(), 0));
  std::vector<std::vector<double>> score(pred.size(), std::vector<double>(gt.size(), 0.0));
  for (std::size_t i = 0; i < pred.size(); ++i) {
    for (std::size_t j = 0; j < gt.size(); ++j) {
      correct[i][j] = correct_points(pred[i].points, gt[j].points, cfg.threshold_px);
      score[i][j] = gt[j].points.empty()
                        ? 0.0
                        : static_cast<double>(correct[i][j]) / gt[j].points.size();
    }
  }
  const auto assign = max_score_assignment(score);
  std::vector<bool> gt_ok(gt.size(), false);
  for (std::size_t i = 0; i < pred.size(); ++i) {
    const int j = assign[i];
    if (j < 0) {
      ++c.fp_lanes;
      continue;
    }
    c.correct_points += correct[i][j];
    if (score[i][j] >= cfg.lane_accuracy_gate && score[i][j] > 0.0) {
      gt_ok[j] = true;
    } else {
      ++c.fp_lanes;
    }
  }
  for (bool ok : gt_ok) c.fn_lanes += !ok;
  return c;
}

LineScores line_metrics(const std::vector<FrameLines>& pred, const std::vector<FrameLines>& gt,
                        const LineConfig& cfg) {
  cfg.validate();
  if (pred.size() != gt.size()) throw ValidationError("line_metrics: frame counts differ");
  LineCounts total;
  for (std::size_t i = 0; i < pred.size(); ++i) total += line_counts(pred[i], gt[i], cfg);
  return total.scores();
}

double default_boundary_tolerance(FrameSize size) {
  return std::ceil(0.008 * std::hypot(size.width, size.height));
}

std::vector<bool> region_boundary(const std::vector<bool>& region, FrameSize size) {
  const int w = size.width, h = size.height;
  std::vector<bool> out(region.size(), false);
  auto inside = [&](int x, int y) { return region[static_cast<std::size_t>(y) * w + x]; };
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      if (!inside(x, y)) continue;
      const bool edge = (x > 0 && !inside(x - 1, y)) || (x + 1 < w && !inside(x + 1, y)) ||
                        (y > 0 && !inside(x, y - 1)) || (y + 1 < h && !inside(x, y + 1));
      out[static_cast<std::size_t>(y) * w + x] = edge;
    }
  }
  return out;
}

namespace {

// Marks every pixel within `radius` of a set pixel.
std::vector<bool> dilate_disk(const std::vector<bool>& src, FrameSize size, double radius) {
  const int w = size.width, h = size.height;
  const int r = static_cast<int>(std::floor(std::max(radius, 0.0)));
  std::vector<std::pair<int, int>> offsets;
  for (int dy = -r; dy <= r; ++dy) {
    for (int dx = -r; dx <= r; ++dx) {
      if (dx * dx + dy * dy <= radius * radius) offsets.emplace_back(dx, dy);
    }
  }
  std::vector<bool> out(src.size(), false);
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      if (!src[static_cast<std::size_t>(y) * w + x]) continue;
      for (const auto& [dx, dy] : offsets) {
        const int xx = x + dx, yy = y + dy;
        if (xx >= 0 && xx < w && yy >= 0 && yy < h) out[static_cast<std::size_t>(yy) * w + xx] = true;
      }
    }
  }
  return out;
}

std::vector<bool> label_region(const InstanceMask& mask, int label) {
  std::vector<bool> out(mask.data().size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = mask.data()[i] == label;
  return out;
}

}  // namespace

double boundary_f_binary(const std::vector<bool>& pred, const std::vector<bool>& gt,
                         FrameSize size, double tolerance_px) {
  const auto pb = region_boundary(pred, size);
  const auto gb = region_boundary(gt, size);
  const long n_pred = std::count(pb.begin(), pb.end(), true);
  const long n_gt = std::count(gb.begin(), gb.end(), true);
  if (n_pred == 0 && n_gt == 0) return 1.0;
  if (n_pred == 0 || n_gt == 0) return 0.0;

  const auto gt_dil = dilate_disk(gb, size, tolerance_px);
  const auto pred_dil = dilate_disk(pb, size, tolerance_px);
  long pred_hit = 0, gt_hit = 0;
  for (std::size_t i = 0; i < pb.size(); ++i) {
    pred_hit += pb[i] && gt_dil[i];
    gt_hit += gb[i] && pred_dil[i];
  }
  const double precision = static_cast<double>(pred_hit) / n_pred;
  const double recall = static_cast<double>(gt_hit) / n_gt;
  if (precision + recall <= 0.0) return 0.0;
  return 2.0 * precision * recall / (precision + recall);
}

double boundary_f_measure(const InstanceMask& pred, const InstanceMask& gt, double tolerance_px) {
  if (pred.size() != gt.size()) throw ShapeError("boundary_f_measure: mask sizes differ");
  const double tol = tolerance_px < 0.0 ? default_boundary_tolerance(gt.size()) : tolerance_px;
  const InstanceMatching m = match_instances(pred, gt);
  const std::size_t n = m.pairs.size() + m.unmatched_pred.size() + m.unmatched_gt.size();
  if (n == 0) return 1.0;
  double sum = 0.0;
  for (const auto& p : m.pairs) {
    sum += boundary_f_binary(label_region(pred, p.pred_label), label_region(gt, p.gt_label),
                             gt.size(), tol);
  }
  return sum / static_cast<double>(n);
}

double frame_jaccard(const InstanceMask& pred, const InstanceMask& gt) {
  const InstanceMatching m = match_instances(pred, gt);
  const std::size_t n = m.pairs.size() + m.unmatched_pred.size() + m.unmatched_gt.size();
  if (n == 0) return 1.0;
  double sum = 0.0;
  for (const auto& p : m.pairs) sum += p.iou;
  return sum / static_cast<double>(n);
}

namespace {

double mean(const std::vector<double>& v) {
  if (v.empty()) return 0.0;
  return std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size());
}

double recall_over(const std::vector<double>& v, double threshold) {
  if (v.empty()) return 0.0;
  const auto n = std::count_if(v.begin(), v.end(), [&](double x) { return x > threshold; });
  return static_cast<double>(n) / static_cast<double>(v.size());
}

struct SequenceVideo {
  std::vector<double> j_frames, f_frames;
  double j = 0.0, f = 0.0;
  std::optional<double> t;
};

SequenceVideo sequence_video(const MaskSequence& pred, const MaskSequence& gt,
                             const VideoConfig& cfg) {
  if (pred.size() != gt.size()) throw ValidationError("video_metrics: sequence lengths differ");
  if (gt.empty()) throw ValidationError("video_metrics: empty sequence");
  SequenceVideo s;
  for (std::size_t i = 0; i < gt.size(); ++i) {
    s.j_frames.push_back(frame_jaccard(pred[i], gt[i]));
    s.f_frames.push_back(boundary_f_measure(pred[i], gt[i], cfg.boundary_tolerance_px));
  }
  s.j = mean(s.j_frames);
  s.f = mean(s.f_frames);
  if (pred.size() >= 2) {
    std::vector<double> stab;
    for (std::size_t i = 0; i + 1 < pred.size(); ++i) {
      stab.push_back(boundary_f_measure(pred[i], pred[i + 1], cfg.boundary_tolerance_px));
    }
    s.t = mean(stab);
  }
  return s;
}

VideoScores combine(const std::vector<SequenceVideo>& seqs, const VideoConfig& cfg) {
  VideoScores out;
  std::vector<double> js, fs, ts, j_frames, f_frames;
  for (const auto& s : seqs) {
    js.push_back(s.j);
    fs.push_back(s.f);
    if (s.t) ts.push_back(*s.t);
    j_frames.insert(j_frames.end(), s.j_frames.begin(), s.j_frames.end());
    f_frames.insert(f_frames.end(), s.f_frames.begin(), s.f_frames.end());
  }
  out.m_j = mean(js);
  out.m_f = mean(fs);
  out.o_j = cfg.per_frame_recall ? recall_over(j_frames, 0.5) : recall_over(js, 0.5);
  out.o_f = cfg.per_frame_recall ? recall_over(f_frames, 0.5) : recall_over(fs, 0.5);
  if (!ts.empty()) out.m_t = mean(ts);
  return out;
}

}  // namespace

VideoScores video_metrics(const std::vector<MaskSequence>& pred,
                          const std::vector<MaskSequence>& gt, const VideoConfig& cfg) {
  if (pred.size() != gt.size()) throw ValidationError("video_metrics: sequence counts differ");
  if (gt.empty()) throw ValidationError("video_metrics: no sequences");
  std::vector<SequenceVideo> seqs;
  for (std::size_t i = 0; i < gt.size(); ++i) seqs.push_back(sequence_video(pred[i], gt[i], cfg));
  return combine(seqs, cfg);
}

MetricReport evaluate(const std::vector<std::string>& ids, const std::vector<MaskSequence>& pred,
                      const std::vector<MaskSequence>& gt, const EvalConfig& cfg) {
  if (gt.empty()) throw ValidationError("evaluate: no sequences");
  if (pred.size() != gt.size() || ids.size() != gt.size()) {
    throw ValidationError("evaluate: ids, predictions and ground truth differ in count");
  }
  cfg.line.validate();
  MetricReport report;
  std::vector<InstanceMatching> all_matchings;
  LineCounts all_lines;
  std::vector<SequenceVideo> seqs;
  for (std::size_t s = 0; s < gt.size(); ++s) {
    if (pred[s].size() != gt[s].size()) {
      throw ValidationError("evaluate: sequence " + ids[s] + " has mismatched lengths");
    }
    std::vector<InstanceMatching> matchings;
    LineCounts lines;
    for (std::size_t i = 0; i < gt[s].size(); ++i) {
      if (pred[s][i].size() != gt[s][i].size()) {
        throw ShapeError("evaluate: frame size mismatch in sequence " + ids[s]);
      }
      matchings.push_back(match_instances(pred[s][i], gt[s][i]));
      lines += line_counts(mask_to_lines(pred[s][i], cfg.line.row_stride),
                           mask_to_lines(gt[s][i], cfg.line.row_stride), cfg.line);
    }
    seqs.push_back(sequence_video(pred[s], gt[s], cfg.video));

    SequenceRecord rec;
    rec.id = ids[s];
    rec.frames = static_cast<int>(gt[s].size());
    rec.region = region_metrics(matchings);
    rec.line = lines.scores();
    rec.j = seqs.back().j;
    rec.f = seqs.back().f;
    rec.t = seqs.back().t;
    report.sequences.push_back(rec);

    all_matchings.insert(all_matchings.end(), matchings.begin(), matchings.end());
    all_lines += lines;
  }
  report.region = region_metrics(all_matchings);
  report.line = all_lines.scores();
  report.video = combine(seqs, cfg.video);
  return report;
}

namespace {

using nlohmann::json;

json optional_json(const std::optional<double>& v) { return v ? json(*v) : json(nullptr); }

std::optional<double> optional_from(const json& j) {
  if (j.is_null()) return std::nullopt;
  return j.get<double>();
}

}  // namespace

std::string report_to_jsonl(const MetricReport& report) {
  std::ostringstream out;
  for (const auto& s : report.sequences) {
    json rec = {{"record", "sequence"},
                {"report", report.name},
                {"id", s.id},
                {"frames", s.frames},
                {"miou", s.region.miou},
                {"f1_05", s.region.f1_05},
                {"f1_08", s.region.f1_08},
                {"accuracy", s.line.accuracy},
                {"fp", s.line.fp},
                {"fn", s.line.fn},
                {"J", s.j},
                {"F", s.f},
                {"T_proxy", optional_json(s.t)}};
    out << rec.dump() << "\n";
  }
  json agg = {{"record", "aggregate"},
              {"report", report.name},
              {"miou", report.region.miou},
              {"f1_05", report.region.f1_05},
              {"f1_08", report.region.f1_08},
              {"accuracy", report.line.accuracy},
              {"fp", report.line.fp},
              {"fn", report.line.fn},
              {"M_J", report.video.m_j},
              {"O_J", report.video.o_j},
              {"M_F", report.video.m_f},
              {"O_F", report.video.o_f},
              {"M_T_proxy", optional_json(report.video.m_t)}};
  out << agg.dump() << "\n";
  return out.str();
}

MetricReport report_from_jsonl(const std::string& text) {
  MetricReport report;
  std::istringstream in(text);
  std::string line;
  bool have_aggregate = false;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    json rec;
    try {
      rec = json::parse(line);
    } catch (const json::parse_error& e) {
      throw ParseError(std::string("metric report: ") + e.what());
    }
    try {
      report.name = rec.value("report", report.name);
      if (rec.at("record") == "sequence") {
        SequenceRecord s;
        s.id = rec.at("id").get<std::string>();
        s.frames = rec.at("frames").get<int>();
        s.region = {rec.at("miou").get<double>(), rec.at("f1_05").get<double>(),
                    rec.at("f1_08").get<double>()};
        s.line = {rec.at("accuracy").get<double>(), rec.at("fp").get<double>(),
                  rec.at("fn").get<double>()};
        s.j = rec.at("J").get<double>();
        s.f = rec.at("F").get<double>();
        s.t = optional_from(rec.at("T_proxy"));
        report.sequences.push_back(s);
      } else {
        report.region = {rec.at("miou").get<double>(), rec.at("f1_05").get<double>(),
                         rec.at("f1_08").get<double>()};
        report.line = {rec.at("accuracy").get<double>(), rec.at("fp").get<double>(),
                       rec.at("fn").get<double>()};
        report.video.m_j = rec.at("M_J").get<double>();
        report.video.o_j = rec.at("O_J").get<double>();
        report.video.m_f = rec.at("M_F").get<double>();
        report.video.o_f = rec.at("O_F").get<double>();
        report.video.m_t = optional_from(rec.at("M_T_proxy"));
        have_aggregate = true;
      }
    } catch (const json::exception& e) {
      throw ParseError(std::string("metric report: ") + e.what());
    }
  }
  if (!have_aggregate) throw ParseError("metric report has no aggregate record");
  return report;
}

std::string format_table(const std::vector<MetricReport>& reports) {
  std::ostringstream out;
  out << std::left << std::setw(18) << "Method"
      << "| Region: mIoU  F1^0.5  F1^0.8 | Line: Accuracy  FP     FN    "
      << "| Video: M_J    O_J    M_F    O_F    M_T(proxy)\n";
  out << std::string(126, '-') << "\n";
  out << std::fixed << std::setprecision(3);
  for (const auto& r : reports) {
    out << std::left << std::setw(18) << r.name.substr(0, 17) << "| " << std::right
        << std::setw(12) << r.region.miou << std::setw(8) << r.region.f1_05 << std::setw(8)
        << r.region.f1_08 << " | " << std::setw(14) << r.line.accuracy << std::setw(7)
        << r.line.fp << std::setw(7) << r.line.fn << " | " << std::setw(11) << r.video.m_j
        << std::setw(7) << r.video.o_j << std::setw(7) << r.video.m_f << std::setw(7)
        << r.video.o_f;
    if (r.video.m_t) {
      out << std::setw(9) << *r.video.m_t;
    } else {
      out << std::setw(9) << "n/a";
    }
    out << "\n";
  }
  return out.str();
}

}  // namespace mmanet::metrics
