#pragma once

#include <array>
#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include <torch/torch.h>

#include "mmanet/dataset.hpp"

namespace mmanet::net {

// Ablation variants: Basic (mean-aggregated local memory, high-level read
// only), +LM (attentive local memory), +GM (Basic plus attentive global
// memory), +LGM (both attentive memories, high-level read only) and the full
// model (both memories read at both levels).
enum class Variant { kBasic, kLocalMemory, kGlobalMemory, kLocalGlobal, kFull };

Variant parse_variant(const std::string& name);
std::string variant_name(Variant v);
std::vector<std::string> variant_names();

struct ModelConfig {
  // Encoder stage widths at strides 2, 4, 8, 16.
  std::array<std::int64_t, 4> encoder_channels{32, 48, 64, 96};
  // Value channels of the key/value projections; keys use a quarter.
  std::int64_t low_value_channels = 64;
  std::int64_t high_value_channels = 128;
  std::int64_t decoder_channels = 256;
  std::int64_t attention_hidden = 32;
  int memory_size = 5;
  bool use_local_attention = true;
  bool use_global_memory = true;
  bool multi_level = true;
  std::int64_t num_classes = kNumClasses;

  std::int64_t low_key_channels() const { return low_value_channels / 4; }
  std::int64_t high_key_channels() const { return high_value_channels / 4; }

  // Throws ConfigError for flag combinations outside the five variants.
  Variant variant() const;
  void set_variant(Variant v);
  void validate() const;

  // Small widths that train in minutes on one CPU core.
  static ModelConfig desk();

  friend bool operator==(const ModelConfig&, const ModelConfig&) = default;
};

struct FeaturePyramid {
  torch::Tensor f1;    // stride 2
  torch::Tensor f2;    // stride 4
  torch::Tensor low;   // stride 8
  torch::Tensor high;  // stride 16
};

struct KeyValue {
  torch::Tensor key;
  torch::Tensor value;
};

struct MemoryBank {
  std::vector<KeyValue> local;
  std::vector<KeyValue> global;
};

struct AttentionOutput {
  torch::Tensor aggregated;
  // (B, N, H, W); softmax over the N inputs at every location.
  torch::Tensor weights;
};

// Pre-activation residual block: x + conv(relu(conv(relu(x)))).
class ResBlockImpl : public torch::nn::Module {
 public:
  explicit ResBlockImpl(std::int64_t channels);
  torch::Tensor forward(const torch::Tensor& x);

 private:
  torch::nn::Conv2d conv1_{nullptr}, conv2_{nullptr};
};
TORCH_MODULE(ResBlock);

class EncoderImpl : public torch::nn::Module {
 public:
  explicit EncoderImpl(const std::array<std::int64_t, 4>& channels);
  // image: (B, 3, H, W) in [0, 1]; H and W must be multiples of 16.
  FeaturePyramid forward(const torch::Tensor& image);

 private:
  std::array<torch::nn::Conv2d, 4> down_{nullptr, nullptr, nullptr, nullptr};
  std::array<ResBlock, 4> res_{nullptr, nullptr, nullptr, nullptr};
};
TORCH_MODULE(Encoder);

// Two 3x3 convolutions producing a key map and a value map of the input's
// spatial size.
class KeyValueProjectionImpl : public torch::nn::Module {
 public:
  KeyValueProjectionImpl(std::int64_t in_channels, std::int64_t key_channels,
                         std::int64_t value_channels);
  KeyValue forward(const torch::Tensor& feature);

  torch::nn::Conv2d key_conv{nullptr}, value_conv{nullptr};
};
TORCH_MODULE(KeyValueProjection);

// Concatenate N maps -> 1x1 conv -> 3x3 conv -> 3x3 conv -> 1x1 conv -> softmax
// over the N channels; output is sum_i W_i * Z_i.
class AttentionBlockImpl : public torch::nn::Module {
 public:
  AttentionBlockImpl(std::int64_t channels, int num_inputs, std::int64_t hidden);
  AttentionOutput forward(const std::vector<torch::Tensor>& inputs);

  int num_inputs() const { return num_inputs_; }

  torch::nn::Conv2d reduce{nullptr}, conv_a{nullptr}, conv_b{nullptr}, logits{nullptr};

 private:
  std::int64_t channels_;
  int num_inputs_;
};
TORCH_MODULE(AttentionBlock);

// Elementwise mean of the maps; the aggregation used without attention.
torch::Tensor mean_aggregate(const std::vector<torch::Tensor>& maps);

struct AggregationFlags {
  bool local_attention = true;
  bool global_memory = true;
};

// Local-global memory aggregation: attention-weighted local keys plus
// attention-weighted global keys, likewise for values.
class LgmaImpl : public torch::nn::Module {
 public:
  LgmaImpl(std::int64_t key_channels, std::int64_t value_channels, int memory_size,
           std::int64_t hidden);
  KeyValue forward(const MemoryBank& bank, AggregationFlags flags = {});

  AttentionBlock key_local{nullptr}, key_global{nullptr};
  AttentionBlock value_local{nullptr}, value_global{nullptr};

 private:
  int memory_size_;
};
TORCH_MODULE(Lgma);

// Affinity softmax_q(<k_query(p), k_mem(q)> / sqrt(C_k)), (B, HW_query, HW_mem).
torch::Tensor memory_affinity(const torch::Tensor& memory_key, const torch::Tensor& query_key);

// Reads memory values with the affinity and concatenates the query value:
// output has 2 * C_v channels.
torch::Tensor memory_read(const KeyValue& memory, const KeyValue& query);

// Residual refinement: fuse a skip feature with the upsampled coarser map.
class RefineImpl : public torch::nn::Module {
 public:
  RefineImpl(std::int64_t skip_channels, std::int64_t channels);
  torch::Tensor forward(const torch::Tensor& skip, const torch::Tensor& coarse);

 private:
  torch::nn::Conv2d skip_conv_{nullptr};
  ResBlock skip_res_{nullptr}, merge_res_{nullptr};
};
TORCH_MODULE(Refine);

class DecoderImpl : public torch::nn::Module {
 public:
  DecoderImpl(const ModelConfig& cfg);
  // read_low: stride 8, read_high: stride 16, f2: stride 4, f1: stride 2.
  torch::Tensor forward(const torch::Tensor& read_low, const torch::Tensor& read_high,
                        const torch::Tensor& f1, const torch::Tensor& f2);

 private:
  torch::nn::Conv2d compress_low_{nullptr}, compress_high_{nullptr};
  ResBlock compress_low_res_{nullptr}, compress_high_res_{nullptr};
  Refine refine_low_{nullptr}, refine_f2_{nullptr}, refine_f1_{nullptr};
  torch::nn::Conv2d head_{nullptr};
  std::int64_t low_in_, high_in_;
};
TORCH_MODULE(Decoder);

// Memory encodings of one frame at both levels.
struct FrameMemory {
  FeaturePyramid features;
  KeyValue low;
  KeyValue high;
};

enum class ForwardMode {
  kFull,
  // First training stage: local memory only, mean-aggregated.
  kPretrain,
};

class MmaNetImpl : public torch::nn::Module {
 public:
  explicit MmaNetImpl(ModelConfig cfg);

  const ModelConfig& config() const { return cfg_; }

  FeaturePyramid encode(const torch::Tensor& images);
  // Encodes `images` (B,3,H,W) and projects both levels.
  std::vector<FrameMemory> encode_frames(const torch::Tensor& images);

  // Logits (1, K, H, W) for the query frame of `sel`. `frames` is the whole
  // clip as (T, 3, H, W); only the frames named by `sel` are encoded.
  torch::Tensor forward(const torch::Tensor& frames, const data::MemorySelection& sel,
                        ForwardMode mode = ForwardMode::kFull);

  // Same, from per-frame encodings keyed by frame index.
  torch::Tensor forward_encoded(const std::map<int, FrameMemory>& encoded,
                                const data::MemorySelection& sel,
                                ForwardMode mode = ForwardMode::kFull);

  Encoder encoder{nullptr};
  KeyValueProjection project_low{nullptr}, project_high{nullptr};
  Lgma lgma_low{nullptr}, lgma_high{nullptr};
  Decoder decoder{nullptr};

 private:
  KeyValue aggregate(Lgma& lgma, const MemoryBank& bank, ForwardMode mode) const;

  ModelConfig cfg_;
};
TORCH_MODULE(MmaNet);

// Clip frames as a (T, 3, H, W) float tensor.
torch::Tensor clip_to_tensor(const data::VideoClip& clip);
torch::Tensor image_to_tensor(const RgbImage& image);
// Target labels as a (1, H, W) int64 tensor.
torch::Tensor mask_to_tensor(const InstanceMask& mask);
// Per-pixel argmax of (1, K, H, W) logits.
InstanceMask logits_to_mask(const torch::Tensor& logits);

// Checkpoint archive (torch serialization container):
//   "format"        string  "mmanet-checkpoint"
//   "version"       int     1
//   "stage"         int     training stage that produced the weights (0 = none)
//   "model_config"  string  ModelConfig as JSON
//   everything else: named parameters of MmaNet.
inline constexpr int kCheckpointVersion = 1;

void save_checkpoint(const std::filesystem::path& path, MmaNet& model, int stage);

struct LoadedCheckpoint {
  MmaNet model{nullptr};
  int stage = 0;
};

LoadedCheckpoint load_checkpoint(const std::filesystem::path& path);

// Copies every parameter of `src` into `dst`; parameter sets must agree.
void copy_parameters(MmaNet& dst, MmaNet& src);

}  // namespace mmanet::net
