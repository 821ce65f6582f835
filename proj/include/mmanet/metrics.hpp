#pragma once

#include <optional>
#include <string>
#include <vector>

#include "mmanet/image.hpp"

namespace mmanet::metrics {

// Maximum-total-score one-to-one assignment (Hungarian method). `score` is a
// rows x cols matrix; returns for each row the assigned column or -1.
std::vector<int> max_score_assignment(const std::vector<std::vector<double>>& score);

struct InstancePair {
  int pred_label = 0;
  int gt_label = 0;
  double iou = 0.0;
};

struct InstanceMatching {
  std::vector<InstancePair> pairs;
  std::vector<int> unmatched_pred;
  std::vector<int> unmatched_gt;

  std::size_t num_pred() const { return pairs.size() + unmatched_pred.size(); }
  std::size_t num_gt() const { return pairs.size() + unmatched_gt.size(); }
};

// Optimal IoU assignment between the instance regions of two label images.
// Matching is by region; label values only name the regions.
InstanceMatching match_instances(const InstanceMask& pred, const InstanceMask& gt);

struct RegionScores {
  double miou = 0.0;
  double f1_05 = 0.0;
  double f1_08 = 0.0;
};

// Unmatched ground-truth instances count as IoU 0 in mIoU. A frame set with
// neither predicted nor ground-truth instances scores 1 everywhere.
RegionScores region_metrics(const std::vector<InstanceMatching>& frames);
double f1_at(const std::vector<InstanceMatching>& frames, double iou_threshold);

struct LinePoint {
  int y = 0;
  double x = 0.0;
};
using Line = std::vector<LinePoint>;

struct LabeledLine {
  int label = 0;
  Line points;
};
using FrameLines = std::vector<LabeledLine>;

// Mean column of `label` on every `row_stride`-th row (starting at row 0).
Line mask_to_line(const InstanceMask& mask, int label, int row_stride = 10);
FrameLines mask_to_lines(const InstanceMask& mask, int row_stride = 10);

struct LineConfig {
  double threshold_px = 20.0;
  double lane_accuracy_gate = 0.85;
  int row_stride = 10;

  void validate() const;
};

struct LineScores {
  double accuracy = 0.0;
  double fp = 0.0;
  double fn = 0.0;
};

// Per-frame counts behind LineScores, summable across frames.
struct LineCounts {
  long correct_points = 0;
  long gt_points = 0;
  long fp_lanes = 0;
  long pred_lanes = 0;
  long fn_lanes = 0;
  long gt_lanes = 0;

  LineCounts& operator+=(const LineCounts& o);
  LineScores scores() const;
};

LineCounts line_counts(const FrameLines& pred, const FrameLines& gt, const LineConfig& cfg);
LineScores line_metrics(const std::vector<FrameLines>& pred, const std::vector<FrameLines>& gt,
                        const LineConfig& cfg = {});

// 0.8% of the image diagonal, rounded up to whole pixels.
double default_boundary_tolerance(FrameSize size);

// Inner boundary of a binary region: region pixels with a 4-neighbour outside
// the region. Neighbours beyond the image border are ignored.
std::vector<bool> region_boundary(const std::vector<bool>& region, FrameSize size);

// Boundary F-measure of two binary regions; boundary pixels match when a
// boundary pixel of the other region lies within `tolerance_px` (Euclidean).
double boundary_f_binary(const std::vector<bool>& pred, const std::vector<bool>& gt,
                         FrameSize size, double tolerance_px);

// Averaged over matched instance pairs plus unmatched instances on either side
// (which score 0). Two empty masks score 1. Negative tolerance selects the
// default.
double boundary_f_measure(const InstanceMask& pred, const InstanceMask& gt,
                          double tolerance_px = -1.0);

// Per-frame Jaccard: matched IoUs averaged over pairs plus unmatched instances
// on either side. Two empty masks score 1.
double frame_jaccard(const InstanceMask& pred, const InstanceMask& gt);

struct VideoConfig {
  double boundary_tolerance_px = -1.0;
  // Recall over frames rather than over sequences.
  bool per_frame_recall = false;
};

struct VideoScores {
  double m_j = 0.0;
  double o_j = 0.0;
  double m_f = 0.0;
  double o_f = 0.0;
  // Temporal-stability proxy; absent when no sequence has two frames.
  std::optional<double> m_t;
};

using MaskSequence = std::vector<InstanceMask>;

VideoScores video_metrics(const std::vector<MaskSequence>& pred,
                          const std::vector<MaskSequence>& gt, const VideoConfig& cfg = {});

struct SequenceRecord {
  std::string id;
  int frames = 0;
  RegionScores region;
  LineScores line;
  double j = 0.0;
  double f = 0.0;
  std::optional<double> t;
};

struct MetricReport {
  std::string name;
  RegionScores region;
  LineScores line;
  VideoScores video;
  std::vector<SequenceRecord> sequences;
};

struct EvalConfig {
  LineConfig line;
  VideoConfig video;
};

MetricReport evaluate(const std::vector<std::string>& ids, const std::vector<MaskSequence>& pred,
                      const std::vector<MaskSequence>& gt, const EvalConfig& cfg = {});

// One JSON record per sequence followed by an aggregate record.
std::string report_to_jsonl(const MetricReport& report);
MetricReport report_from_jsonl(const std::string& text);

// Fixed-width table with the Region / Line / Video column groups; one row per
// report.
std::string format_table(const std::vector<MetricReport>& reports);

}  // namespace mmanet::metrics
