#include "mmanet/training.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <numeric>
#include <ostream>
#include <random>

#include <nlohmann/json.hpp>

namespace mmanet::train {
namespace F = torch::nn::functional;
namespace {

struct Sample {
  int clip = 0;
  int frame = 0;
};

struct PreparedClip {
  torch::Tensor frames;                // (T, 3, H, W)
  std::vector<torch::Tensor> targets;  // (1, H, W) each
  torch::Tensor flipped_frames;
  std::vector<torch::Tensor> flipped_targets;
};

std::vector<PreparedClip> prepare(const std::vector<data::VideoClip>& clips, bool with_flip) {
  std::vector<PreparedClip> out;
  for (const auto& clip : clips) {
    clip.validate();
    PreparedClip p;
    p.frames = net::clip_to_tensor(clip);
    for (const auto& m : clip.masks) p.targets.push_back(net::mask_to_tensor(m));
    if (with_flip) {
      const auto flipped = data::flip_horizontal(clip);
      p.flipped_frames = net::clip_to_tensor(flipped);
      for (const auto& m : flipped.masks) p.flipped_targets.push_back(net::mask_to_tensor(m));
    }
    out.push_back(std::move(p));
  }
  return out;
}

std::unique_ptr<torch::optim::Optimizer> make_optimizer(net::MmaNet& model,
                                                        const StageConfig& cfg) {
  if (cfg.optimizer == OptimizerKind::kAdam) {
    return std::make_unique<torch::optim::Adam>(
        model->parameters(), torch::optim::AdamOptions(cfg.lr).weight_decay(cfg.weight_decay));
  }
  return std::make_unique<torch::optim::SGD>(
      model->parameters(),
      torch::optim::SGDOptions(cfg.lr).momentum(cfg.momentum).weight_decay(cfg.weight_decay));
}

TrainReport run_stage(net::MmaNet& model, const std::vector<data::VideoClip>& clips,
                      const StageConfig& cfg, const TrainHooks& hooks) {
  cfg.validate();
  hooks.loss.validate();
  if (clips.empty()) throw PreconditionError("no training clips");
  const auto start = std::chrono::steady_clock::now();

  torch::manual_seed(cfg.seed);
  std::mt19937_64 rng(cfg.seed);
  std::uniform_real_distribution<double> coin(0.0, 1.0);

  const bool with_flip = cfg.hflip_probability > 0.0;
  const auto prepared = prepare(clips, with_flip);
  std::vector<Sample> samples;
  for (int c = 0; c < static_cast<int>(clips.size()); ++c) {
    for (int t = 0; t < clips[c].length(); ++t) samples.push_back({c, t});
  }

  const bool stage1 = cfg.stage == 1;
  const int memory = stage1 ? kStage1MemoryFrames : model->config().memory_size;
  const auto mode = stage1 ? net::ForwardMode::kPretrain : net::ForwardMode::kFull;

  auto optimizer = make_optimizer(model, cfg);
  model->train();

  TrainReport report;
  report.seed = cfg.seed;
  int done = 0;
  for (int epoch = 1; done < cfg.iterations; ++epoch) {
    std::shuffle(samples.begin(), samples.end(), rng);
    std::vector<std::vector<int>> permutations;
    for (const auto& clip : clips) {
      permutations.push_back(data::shuffle_video_index(clip.length(), rng()));
    }

    EpochRecord record;
    record.stage = cfg.stage;
    record.epoch = epoch;
    std::size_t cursor = 0;
    while (cursor < samples.size() && done < cfg.iterations) {
      optimizer->zero_grad();
      const std::size_t end = std::min(samples.size(), cursor + cfg.batch_size);
      const double scale = 1.0 / static_cast<double>(end - cursor);
      double loss_sum = 0.0, ce_sum = 0.0, jac_sum = 0.0;
      for (; cursor < end; ++cursor) {
        const Sample s = samples[cursor];
        const auto& p = prepared[s.clip];
        const bool flip = with_flip && coin(rng) < cfg.hflip_probability;
        const auto& frames = flip ? p.flipped_frames : p.frames;
        const auto& target = flip ? p.flipped_targets[s.frame] : p.targets[s.frame];
        const auto sel = data::select_memory_frames(clips[s.clip].length(), s.frame,
                                                    permutations[s.clip], memory);
        const auto logits = model->forward(frames, sel, mode);
        const auto terms = segmentation_loss_terms(logits, target, hooks.loss);
        const double value = terms.total.item<double>();
        if (!std::isfinite(value)) {
          throw DivergenceError("non-finite loss at stage " + std::to_string(cfg.stage) +
                                " iteration " + std::to_string(done + 1));
        }
        (terms.total * scale).backward();
        loss_sum += value * scale;
        ce_sum += terms.cross_entropy.item<double>() * scale;
        jac_sum += terms.jaccard_loss.item<double>() * scale;
      }
      optimizer->step();
      ++done;
      ++record.iterations;
      report.iteration_losses.push_back(loss_sum);
      record.mean_loss += loss_sum;
      record.mean_cross_entropy += ce_sum;
      record.mean_jaccard_loss += jac_sum;
    }
    if (record.iterations > 0) {
      record.mean_loss /= record.iterations;
      record.mean_cross_entropy /= record.iterations;
      record.mean_jaccard_loss /= record.iterations;
    }
    if (cfg.eval_every_epochs > 0 && epoch % cfg.eval_every_epochs == 0) {
      record.eval = evaluate_model(model, clips, "train", {cfg.seed});
      model->train();
    }
    if (hooks.log != nullptr) {
      *hooks.log << "stage " << cfg.stage << " epoch " << epoch << " iter " << done << "/"
                 << cfg.iterations << " loss " << record.mean_loss << "\n";
      hooks.log->flush();
    }
    if (hooks.on_epoch) hooks.on_epoch(record);
    report.epochs.push_back(std::move(record));
  }
  report.wall_seconds =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  return report;
}

nlohmann::json eval_summary(const metrics::MetricReport& r) {
  nlohmann::json j = {{"mIoU", r.region.miou},  {"F1_0.5", r.region.f1_05},
                      {"F1_0.8", r.region.f1_08}, {"Accuracy", r.line.accuracy},
                      {"FP", r.line.fp},          {"FN", r.line.fn},
                      {"M_J", r.video.m_j},       {"M_F", r.video.m_f}};
  return j;
}

}  // namespace

void LossConfig::validate() const {
  if (ce_weight < 0 || iou_weight < 0 || (ce_weight == 0 && iou_weight == 0)) {
    throw ConfigError("loss weights must be non-negative and not both zero");
  }
  if (!class_weights.empty() && class_weights.size() != static_cast<std::size_t>(kNumClasses)) {
    throw ConfigError("class_weights must have " + std::to_string(kNumClasses) + " entries");
  }
  for (double w : class_weights) {
    if (!(w >= 0)) throw ConfigError("class weights must be non-negative");
  }
}

LossTerms segmentation_loss_terms(const torch::Tensor& logits, const torch::Tensor& target,
                                  const LossConfig& cfg) {
  if (logits.dim() != 4 || target.dim() != 3 || logits.size(0) != target.size(0) ||
      logits.size(2) != target.size(1) || logits.size(3) != target.size(2)) {
    throw ShapeError("loss: logits (B,K,H,W) and target (B,H,W) disagree");
  }
  const auto k = logits.size(1);
  auto ce_opts = F::CrossEntropyFuncOptions();
  if (!cfg.class_weights.empty()) {
    if (static_cast<std::int64_t>(cfg.class_weights.size()) != k) {
      throw ShapeError("loss: class weight count differs from the class count");
    }
    ce_opts.weight(torch::tensor(cfg.class_weights, logits.options()));
  }
  LossTerms out;
  out.cross_entropy = F::cross_entropy(logits, target, ce_opts);

  const auto probs = torch::softmax(logits, 1);
  const auto onehot = F::one_hot(target, k).permute({0, 3, 1, 2}).to(probs.dtype());
  const auto inter = (probs * onehot).sum({0, 2, 3});
  const auto uni = probs.sum({0, 2, 3}) + onehot.sum({0, 2, 3}) - inter;
  const auto present = onehot.sum({0, 2, 3}) > 0;
  const auto jaccard = inter.index({present}) / uni.index({present});
  out.jaccard_loss = 1.0 - jaccard.mean();

  out.total = cfg.ce_weight * out.cross_entropy + cfg.iou_weight * out.jaccard_loss;
  return out;
}

torch::Tensor segmentation_loss(const torch::Tensor& logits, const torch::Tensor& target,
                                const LossConfig& cfg) {
  return segmentation_loss_terms(logits, target, cfg).total;
}

StageConfig StageConfig::reference(int stage) {
  StageConfig cfg;
  cfg.stage = stage;
  cfg.batch_size = 1;
  cfg.momentum = 0.9;
  if (stage == 1) {
    cfg.optimizer = OptimizerKind::kAdam;
    cfg.lr = 1e-5;
    cfg.weight_decay = 5e-4;
  } else {
    cfg.optimizer = OptimizerKind::kSgd;
    cfg.lr = 1e-3;
    cfg.weight_decay = 1e-6;
  }
  return cfg;
}

StageConfig StageConfig::desk(int stage) {
  StageConfig cfg;
  cfg.stage = stage;
  cfg.batch_size = 1;
  if (stage == 1) {
    cfg.optimizer = OptimizerKind::kAdam;
    cfg.lr = 2e-3;
    cfg.weight_decay = 0.0;
    cfg.iterations = 300;
  } else {
    cfg.optimizer = OptimizerKind::kSgd;
    cfg.lr = 1e-2;
    cfg.momentum = 0.9;
    cfg.weight_decay = 1e-6;
    cfg.iterations = 150;
  }
  return cfg;
}

void StageConfig::validate() const {
  if (stage != 1 && stage != 2) throw ConfigError("stage must be 1 or 2");
  if (!(lr > 0) || !std::isfinite(lr)) throw ConfigError("learning rate must be positive");
  if (momentum < 0 || momentum >= 1) throw ConfigError("momentum must be in [0, 1)");
  if (weight_decay < 0) throw ConfigError("weight decay must be non-negative");
  if (iterations < 1) throw ConfigError("iterations must be >= 1");
  if (batch_size < 1) throw ConfigError("batch size must be >= 1");
  if (hflip_probability < 0 || hflip_probability > 1) {
    throw ConfigError("hflip probability must be in [0, 1]");
  }
  if (eval_every_epochs < 0) throw ConfigError("eval_every_epochs must be >= 0");
}

TrainReport train_stage1(net::MmaNet& model, const std::vector<data::VideoClip>& clips,
                         const StageConfig& cfg, const TrainHooks& hooks) {
  if (cfg.stage != 1) throw ConfigError("train_stage1 requires a stage-1 config");
  return run_stage(model, clips, cfg, hooks);
}

TrainReport train_stage2(net::MmaNet& model, const std::filesystem::path& stage1_checkpoint,
                         const std::vector<data::VideoClip>& clips, const StageConfig& cfg,
                         const TrainHooks& hooks) {
  if (cfg.stage != 2) throw ConfigError("train_stage2 requires a stage-2 config");
  if (!std::filesystem::exists(stage1_checkpoint)) {
    throw PreconditionError("stage-1 checkpoint " + stage1_checkpoint.string() +
                            " not found; run stage 1 first");
  }
  auto loaded = net::load_checkpoint(stage1_checkpoint);
  if (loaded.stage != 1) {
    throw PreconditionError(stage1_checkpoint.string() + " was not produced by stage 1");
  }
  net::copy_parameters(model, loaded.model);
  return run_stage(model, clips, cfg, hooks);
}

std::vector<InstanceMask> predict_clip(net::MmaNet& model, const data::VideoClip& clip,
                                       const PredictOptions& opts) {
  clip.validate();
  torch::NoGradGuard no_grad;
  model->eval();
  const int length = clip.length();
  const auto size = clip.frame_size();
  auto frames = net::clip_to_tensor(clip);
  const bool aligned = size.width % 16 == 0 && size.height % 16 == 0;
  if (!aligned) {
    if (!opts.resize_to_multiple) {
      throw ShapeError("frame size " + std::to_string(size.width) + "x" +
                       std::to_string(size.height) + " is not divisible by 16");
    }
    auto round16 = [](int v) { return std::max<std::int64_t>(16, (v + 8) / 16 * 16); };
    frames = F::interpolate(frames, F::InterpolateFuncOptions()
                                        .size(std::vector<std::int64_t>{round16(size.height),
                                                                        round16(size.width)})
                                        .mode(torch::kBilinear)
                                        .align_corners(false));
  }

  std::map<int, net::FrameMemory> encoded;
  constexpr int kChunk = 8;
  for (int start = 0; start < length; start += kChunk) {
    const int n = std::min(kChunk, length - start);
    auto chunk = model->encode_frames(frames.narrow(0, start, n));
    for (int i = 0; i < n; ++i) encoded.emplace(start + i, std::move(chunk[i]));
  }

  const auto permutation = data::shuffle_video_index(length, opts.seed);
  std::vector<InstanceMask> out;
  out.reserve(length);
  for (int t = 0; t < length; ++t) {
    const auto sel =
        data::select_memory_frames(length, t, permutation, model->config().memory_size);
    auto logits = model->forward_encoded(encoded, sel);
    if (!aligned) {
      logits = F::interpolate(logits, F::InterpolateFuncOptions()
                                          .size(std::vector<std::int64_t>{size.height,
                                                                          size.width})
                                          .mode(torch::kBilinear)
                                          .align_corners(false));
    }
    out.push_back(net::logits_to_mask(logits));
  }
  return out;
}

metrics::MetricReport evaluate_model(net::MmaNet& model, const std::vector<data::VideoClip>& clips,
                                     const std::string& name, const PredictOptions& opts,
                                     const metrics::EvalConfig& eval) {
  std::vector<std::string> ids;
  std::vector<metrics::MaskSequence> pred, gt;
  for (const auto& clip : clips) {
    ids.push_back(clip.id);
    pred.push_back(predict_clip(model, clip, opts));
    gt.push_back(clip.masks);
  }
  auto report = metrics::evaluate(ids, pred, gt, eval);
  report.name = name;
  return report;
}

std::string train_report_to_jsonl(const TrainReport& report) {
  std::string out;
  for (const auto& e : report.epochs) {
    nlohmann::json j = {{"record", "epoch"},
                        {"stage", e.stage},
                        {"epoch", e.epoch},
                        {"iterations", e.iterations},
                        {"loss", e.mean_loss},
                        {"cross_entropy", e.mean_cross_entropy},
                        {"jaccard_loss", e.mean_jaccard_loss}};
    if (e.eval) j["eval"] = eval_summary(*e.eval);
    out += j.dump() + "\n";
  }
  out += train_report_summary(report) + "\n";
  return out;
}

std::string train_report_summary(const TrainReport& report) {
  const auto& losses = report.iteration_losses;
  const std::size_t tail = std::max<std::size_t>(1, losses.size() / 10);
  double first = 0.0, last = 0.0;
  if (!losses.empty()) {
    first = std::accumulate(losses.begin(), losses.begin() + std::min(tail, losses.size()), 0.0) /
            std::min(tail, losses.size());
    last = std::accumulate(losses.end() - std::min(tail, losses.size()), losses.end(), 0.0) /
           std::min(tail, losses.size());
  }
  nlohmann::json j = {{"record", "summary"},
                      {"seed", report.seed},
                      {"iterations", losses.size()},
                      {"epochs", report.epochs.size()},
                      {"initial_loss", first},
                      {"final_loss", last},
                      {"wall_seconds", report.wall_seconds}};
  return j.dump();
}

}  // namespace mmanet::train
