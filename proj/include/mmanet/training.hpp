#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include <torch/torch.h>

#include "mmanet/dataset.hpp"
#include "mmanet/metrics.hpp"
#include "mmanet/network.hpp"

namespace mmanet::train {

struct LossConfig {
  double ce_weight = 1.0;
  double iou_weight = 1.0;
  // Optional per-class cross-entropy weights (K entries).
  std::vector<double> class_weights;

  void validate() const;
};

struct LossTerms {
  torch::Tensor total;
  torch::Tensor cross_entropy;
  // 1 - soft Jaccard averaged over the classes present in the target.
  torch::Tensor jaccard_loss;
};

// logits: (B, K, H, W); target: (B, H, W) int64 labels < K.
LossTerms segmentation_loss_terms(const torch::Tensor& logits, const torch::Tensor& target,
                                  const LossConfig& cfg = {});
torch::Tensor segmentation_loss(const torch::Tensor& logits, const torch::Tensor& target,
                                const LossConfig& cfg = {});

enum class OptimizerKind { kAdam, kSgd };

// Frames in the first-stage local memory.
inline constexpr int kStage1MemoryFrames = 2;

struct StageConfig {
  int stage = 1;
  OptimizerKind optimizer = OptimizerKind::kAdam;
  double lr = 1e-3;
  double momentum = 0.9;
  double weight_decay = 0.0;
  int iterations = 200;
  int batch_size = 1;
  std::uint64_t seed = 0;
  double hflip_probability = 0.0;
  // Evaluate the training clips every n epochs (0 disables).
  int eval_every_epochs = 0;

  // Published optimizer settings for each stage.
  static StageConfig reference(int stage);
  // Desk-scale defaults: same optimizer family per stage, budgets in
  // iterations and learning rates suited to training from scratch.
  static StageConfig desk(int stage);

  void validate() const;
};

struct EpochRecord {
  int stage = 0;
  int epoch = 0;
  int iterations = 0;
  double mean_loss = 0.0;
  double mean_cross_entropy = 0.0;
  double mean_jaccard_loss = 0.0;
  std::optional<metrics::MetricReport> eval;
};

struct TrainReport {
  std::vector<EpochRecord> epochs;
  std::vector<double> iteration_losses;
  std::uint64_t seed = 0;
  double wall_seconds = 0.0;
};

struct TrainHooks {
  std::function<void(const EpochRecord&)> on_epoch;
  // Optional progress log.
  std::ostream* log = nullptr;
  LossConfig loss;
};

// Encoder, projections, memory read and decoder trained with a local memory
// of the two preceding frames, mean-aggregated.
TrainReport train_stage1(net::MmaNet& model, const std::vector<data::VideoClip>& clips,
                         const StageConfig& cfg, const TrainHooks& hooks = {});

// Loads the first-stage weights from `stage1_checkpoint`, then trains the
// whole network with local and shuffled global memories. One shuffle
// permutation is drawn per clip per epoch.
TrainReport train_stage2(net::MmaNet& model, const std::filesystem::path& stage1_checkpoint,
                         const std::vector<data::VideoClip>& clips, const StageConfig& cfg,
                         const TrainHooks& hooks = {});

struct PredictOptions {
  // Seed of the inference-time shuffle that picks global memory frames.
  std::uint64_t seed = 0;
  // Resize frames whose size is not a multiple of 16 instead of failing.
  bool resize_to_multiple = false;
};

std::vector<InstanceMask> predict_clip(net::MmaNet& model, const data::VideoClip& clip,
                                       const PredictOptions& opts = {});

metrics::MetricReport evaluate_model(net::MmaNet& model, const std::vector<data::VideoClip>& clips,
                                     const std::string& name, const PredictOptions& opts = {},
                                     const metrics::EvalConfig& eval = {});

// One JSON record per epoch followed by a summary record.
std::string train_report_to_jsonl(const TrainReport& report);
std::string train_report_summary(const TrainReport& report);

}  // namespace mmanet::train
