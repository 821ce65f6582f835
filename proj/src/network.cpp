#include "mmanet/network.hpp"

#include <cmath>
#include <cstring>
#include <set>
#include <sstream>

#include "mmanet/config_io.hpp"

namespace mmanet::net {
namespace F = torch::nn::functional;
namespace {

torch::nn::Conv2d conv3x3(std::int64_t in, std::int64_t out, std::int64_t stride = 1) {
  return torch::nn::Conv2d(torch::nn::Conv2dOptions(in, out, 3).stride(stride).padding(1));
}

torch::nn::Conv2d conv1x1(std::int64_t in, std::int64_t out) {
  return torch::nn::Conv2d(torch::nn::Conv2dOptions(in, out, 1));
}

std::string shape_str(const torch::Tensor& t) {
  std::ostringstream ss;
  ss << t.sizes();
  return ss.str();
}

void require_spatial(const torch::Tensor& a, const torch::Tensor& b, std::int64_t scale,
                     const char* what) {
  if (a.size(2) * scale != b.size(2) || a.size(3) * scale != b.size(3)) {
    throw ShapeError(std::string(what) + ": spatial sizes " + shape_str(a) + " and " +
                     shape_str(b) + " do not differ by x" + std::to_string(scale));
  }
}

torch::Tensor upsample_to(const torch::Tensor& x, const torch::Tensor& like) {
  return F::interpolate(x, F::InterpolateFuncOptions()
                               .size(std::vector<std::int64_t>{like.size(2), like.size(3)})
                               .mode(torch::kBilinear)
                               .align_corners(false));
}

}  // namespace

Variant parse_variant(const std::string& name) {
  if (name == "basic") return Variant::kBasic;
  if (name == "lm") return Variant::kLocalMemory;
  if (name == "gm") return Variant::kGlobalMemory;
  if (name == "lgm") return Variant::kLocalGlobal;
  if (name == "full") return Variant::kFull;
  throw ConfigError("unknown variant '" + name + "'; valid variants: basic, lm, gm, lgm, full");
}

std::string variant_name(Variant v) {
  switch (v) {
    case Variant::kBasic: return "basic";
    case Variant::kLocalMemory: return "lm";
    case Variant::kGlobalMemory: return "gm";
    case Variant::kLocalGlobal: return "lgm";
    case Variant::kFull: return "full";
  }
  return "full";
}

std::vector<std::string> variant_names() { return {"basic", "lm", "gm", "lgm", "full"}; }

Variant ModelConfig::variant() const {
  const int key = (use_local_attention ? 1 : 0) | (use_global_memory ? 2 : 0) |
                  (multi_level ? 4 : 0);
  switch (key) {
    case 0: return Variant::kBasic;
    case 1: return Variant::kLocalMemory;
    case 2: return Variant::kGlobalMemory;
    case 3: return Variant::kLocalGlobal;
    case 7: return Variant::kFull;
    default:
      throw ConfigError(
          "flag combination (local_attention=" + std::to_string(use_local_attention) +
          ", global_memory=" + std::to_string(use_global_memory) +
          ", multi_level=" + std::to_string(multi_level) +
          ") is not an ablation variant; valid variants: basic, lm, gm, lgm, full");
  }
}

void ModelConfig::set_variant(Variant v) {
  use_local_attention = v == Variant::kLocalMemory || v == Variant::kLocalGlobal || v == Variant::kFull;
  use_global_memory = v == Variant::kGlobalMemory || v == Variant::kLocalGlobal || v == Variant::kFull;
  multi_level = v == Variant::kFull;
}

void ModelConfig::validate() const {
  variant();
  for (auto c : encoder_channels) {
    if (c < 1) throw ConfigError("encoder channels must be positive");
  }
  if (low_value_channels < 4 || low_value_channels % 4 != 0 || high_value_channels < 4 ||
      high_value_channels % 4 != 0) {
    throw ConfigError("value channels must be positive multiples of 4");
  }
  if (decoder_channels < 1 || attention_hidden < 1) {
    throw ConfigError("decoder and attention widths must be positive");
  }
  if (memory_size < 1) throw ConfigError("memory size must be >= 1");
  if (num_classes < 2) throw ConfigError("at least two classes required");
}

ModelConfig ModelConfig::desk() {
  ModelConfig cfg;
  cfg.encoder_channels = {16, 32, 48, 64};
  cfg.low_value_channels = 32;
  cfg.high_value_channels = 64;
  cfg.decoder_channels = 32;
  cfg.attention_hidden = 16;
  return cfg;
}

ResBlockImpl::ResBlockImpl(std::int64_t channels)
    : conv1_(conv3x3(channels, channels)), conv2_(conv3x3(channels, channels)) {
  register_module("conv1", conv1_);
  register_module("conv2", conv2_);
}

torch::Tensor ResBlockImpl::forward(const torch::Tensor& x) {
  auto r = conv1_(torch::relu(x));
  r = conv2_(torch::relu(r));
  return x + r;
}

EncoderImpl::EncoderImpl(const std::array<std::int64_t, 4>& channels) {
  std::int64_t in = 3;
  for (int i = 0; i < 4; ++i) {
    down_[i] = register_module("down" + std::to_string(i), conv3x3(in, channels[i], 2));
    res_[i] = register_module("res" + std::to_string(i), ResBlock(channels[i]));
    in = channels[i];
  }
}

FeaturePyramid EncoderImpl::forward(const torch::Tensor& image) {
  if (image.dim() != 4 || image.size(1) != 3) {
    throw ShapeError("encoder expects (B, 3, H, W), got " + shape_str(image));
  }
  if (image.size(2) % 16 != 0 || image.size(3) % 16 != 0) {
    throw ShapeError("frame size " + std::to_string(image.size(3)) + "x" +
                     std::to_string(image.size(2)) + " is not divisible by 16");
  }
  std::array<torch::Tensor, 4> out;
  auto x = image - 0.5;
  for (int i = 0; i < 4; ++i) {
    x = res_[i](torch::relu(down_[i](x)));
    out[i] = x;
  }
  return {out[0], out[1], out[2], out[3]};
}

KeyValueProjectionImpl::KeyValueProjectionImpl(std::int64_t in_channels,
                                               std::int64_t key_channels,
                                               std::int64_t value_channels)
    : key_conv(conv3x3(in_channels, key_channels)),
      value_conv(conv3x3(in_channels, value_channels)) {
  register_module("key", key_conv);
  register_module("value", value_conv);
}

KeyValue KeyValueProjectionImpl::forward(const torch::Tensor& feature) {
  const auto expected = key_conv->options.in_channels();
  if (feature.dim() != 4 || feature.size(1) != expected) {
    throw ShapeError("key/value projection expects " + std::to_string(expected) +
                     " channels, got " + shape_str(feature));
  }
  return {key_conv(feature), value_conv(feature)};
}

AttentionBlockImpl::AttentionBlockImpl(std::int64_t channels, int num_inputs,
                                       std::int64_t hidden)
    : reduce(conv1x1(channels * num_inputs, hidden)),
      conv_a(conv3x3(hidden, hidden)),
      conv_b(conv3x3(hidden, hidden)),
      logits(conv1x1(hidden, num_inputs)),
      channels_(channels),
      num_inputs_(num_inputs) {
  register_module("reduce", reduce);
  register_module("conv_a", conv_a);
  register_module("conv_b", conv_b);
  register_module("logits", logits);
  // Start from uniform weights, i.e. the unweighted mean of the inputs.
  torch::NoGradGuard no_grad;
  logits->weight.zero_();
  logits->bias.zero_();
}

AttentionOutput AttentionBlockImpl::forward(const std::vector<torch::Tensor>& inputs) {
  if (static_cast<int>(inputs.size()) != num_inputs_) {
    throw ShapeError("attention block expects " + std::to_string(num_inputs_) + " maps, got " +
                     std::to_string(inputs.size()));
  }
  for (const auto& z : inputs) {
    if (z.dim() != 4 || z.size(1) != channels_ || !z.sizes().equals(inputs.front().sizes())) {
      throw ShapeError("attention block inputs must share shape (B, " +
                       std::to_string(channels_) + ", H, W); got " + shape_str(z));
    }
  }
  auto h = torch::relu(reduce(torch::cat(inputs, 1)));
  h = torch::relu(conv_a(h));
  h = torch::relu(conv_b(h));
  auto weights = torch::softmax(logits(h), 1);
  auto stacked = torch::stack(inputs, 1);  // (B, N, C, H, W)
  auto aggregated = (stacked * weights.unsqueeze(2)).sum(1);
  return {aggregated, weights};
}

torch::Tensor mean_aggregate(const std::vector<torch::Tensor>& maps) {
  if (maps.empty()) throw ValidationError("cannot aggregate an empty memory");
  return torch::stack(maps, 0).mean(0);
}

LgmaImpl::LgmaImpl(std::int64_t key_channels, std::int64_t value_channels, int memory_size,
                   std::int64_t hidden)
    : key_local(AttentionBlock(key_channels, memory_size, hidden)),
      key_global(AttentionBlock(key_channels, memory_size, hidden)),
      value_local(AttentionBlock(value_channels, memory_size, hidden)),
      value_global(AttentionBlock(value_channels, memory_size, hidden)),
      memory_size_(memory_size) {
  register_module("key_local", key_local);
  register_module("key_global", key_global);
  register_module("value_local", value_local);
  register_module("value_global", value_global);
}

KeyValue LgmaImpl::forward(const MemoryBank& bank, AggregationFlags flags) {
  auto check = [&](const std::vector<KeyValue>& pairs, const char* which) {
    if (static_cast<int>(pairs.size()) != memory_size_) {
      throw ValidationError(std::string(which) + " memory holds " + std::to_string(pairs.size()) +
                            " pairs, expected " + std::to_string(memory_size_));
    }
    for (const auto& kv : pairs) {
      if (!kv.key.defined() || !kv.value.defined()) {
        throw ValidationError(std::string(which) + " memory has a missing key/value pair");
      }
    }
  };
  check(bank.local, "local");
  if (flags.global_memory) check(bank.global, "global");

  auto keys = [](const std::vector<KeyValue>& pairs) {
    std::vector<torch::Tensor> out;
    for (const auto& kv : pairs) out.push_back(kv.key);
    return out;
  };
  auto values = [](const std::vector<KeyValue>& pairs) {
    std::vector<torch::Tensor> out;
    for (const auto& kv : pairs) out.push_back(kv.value);
    return out;
  };

  KeyValue out;
  if (flags.local_attention) {
    out.key = key_local(keys(bank.local)).aggregated;
    out.value = value_local(values(bank.local)).aggregated;
  } else {
    out.key = mean_aggregate(keys(bank.local));
    out.value = mean_aggregate(values(bank.local));
  }
  if (flags.global_memory) {
    out.key = out.key + key_global(keys(bank.global)).aggregated;
    out.value = out.value + value_global(values(bank.global)).aggregated;
  }
  return out;
}

torch::Tensor memory_affinity(const torch::Tensor& memory_key, const torch::Tensor& query_key) {
  if (memory_key.dim() != 4 || query_key.dim() != 4 ||
      memory_key.size(0) != query_key.size(0) || memory_key.size(1) != query_key.size(1)) {
    throw ShapeError("memory read: key shapes " + shape_str(memory_key) + " and " +
                     shape_str(query_key) + " are incompatible");
  }
  const auto b = memory_key.size(0);
  const auto ck = memory_key.size(1);
  auto mk = memory_key.reshape({b, ck, -1});                 // (B, Ck, M)
  auto qk = query_key.reshape({b, ck, -1}).transpose(1, 2);  // (B, Q, Ck)
  auto logits = torch::bmm(qk, mk) / std::sqrt(static_cast<double>(ck));
  return torch::softmax(logits, 2);
}

torch::Tensor memory_read(const KeyValue& memory, const KeyValue& query) {
  if (!memory.key.sizes().slice(2).equals(query.key.sizes().slice(2)) ||
      !memory.value.sizes().slice(2).equals(memory.key.sizes().slice(2)) ||
      !query.value.sizes().slice(2).equals(query.key.sizes().slice(2)) ||
      memory.value.size(1) != query.value.size(1)) {
    throw ShapeError("memory read: memory " + shape_str(memory.key) + "/" +
                     shape_str(memory.value) + " does not match query " +
                     shape_str(query.key) + "/" + shape_str(query.value) +
                     " (level mismatch?)");
  }
  auto affinity = memory_affinity(memory.key, query.key);  // (B, Q, M)
  const auto b = memory.value.size(0);
  const auto cv = memory.value.size(1);
  auto mv = memory.value.reshape({b, cv, -1}).transpose(1, 2);  // (B, M, Cv)
  auto read = torch::bmm(affinity, mv).transpose(1, 2).reshape(query.value.sizes());
  return torch::cat({read, query.value}, 1);
}

RefineImpl::RefineImpl(std::int64_t skip_channels, std::int64_t channels)
    : skip_conv_(conv3x3(skip_channels, channels)),
      skip_res_(ResBlock(channels)),
      merge_res_(ResBlock(channels)) {
  register_module("skip_conv", skip_conv_);
  register_module("skip_res", skip_res_);
  register_module("merge_res", merge_res_);
}

torch::Tensor RefineImpl::forward(const torch::Tensor& skip, const torch::Tensor& coarse) {
  require_spatial(coarse, skip, 2, "refinement block");
  auto s = skip_res_(skip_conv_(skip));
  return merge_res_(s + upsample_to(coarse, s));
}

DecoderImpl::DecoderImpl(const ModelConfig& cfg)
    : compress_low_(conv3x3(2 * cfg.low_value_channels, cfg.decoder_channels)),
      compress_high_(conv3x3(2 * cfg.high_value_channels, cfg.decoder_channels)),
      compress_low_res_(ResBlock(cfg.decoder_channels)),
      compress_high_res_(ResBlock(cfg.decoder_channels)),
      refine_low_(Refine(cfg.decoder_channels, cfg.decoder_channels)),
      refine_f2_(Refine(cfg.encoder_channels[1], cfg.decoder_channels)),
      refine_f1_(Refine(cfg.encoder_channels[0], cfg.decoder_channels)),
      head_(conv3x3(cfg.decoder_channels, cfg.num_classes)),
      low_in_(2 * cfg.low_value_channels),
      high_in_(2 * cfg.high_value_channels) {
  register_module("compress_low", compress_low_);
  register_module("compress_high", compress_high_);
  register_module("compress_low_res", compress_low_res_);
  register_module("compress_high_res", compress_high_res_);
  register_module("refine_low", refine_low_);
  register_module("refine_f2", refine_f2_);
  register_module("refine_f1", refine_f1_);
  register_module("head", head_);
}

torch::Tensor DecoderImpl::forward(const torch::Tensor& read_low, const torch::Tensor& read_high,
                                   const torch::Tensor& f1, const torch::Tensor& f2) {
  if (read_low.dim() != 4 || read_low.size(1) != low_in_ || read_high.dim() != 4 ||
      read_high.size(1) != high_in_) {
    throw ShapeError("decoder expects read features with " + std::to_string(low_in_) + " and " +
                     std::to_string(high_in_) + " channels, got " + shape_str(read_low) +
                     " and " + shape_str(read_high));
  }
  require_spatial(read_high, read_low, 2, "decoder (high -> low)");
  require_spatial(read_low, f2, 2, "decoder (low -> f2)");
  require_spatial(f2, f1, 2, "decoder (f2 -> f1)");

  auto low = compress_low_res_(compress_low_(read_low));
  auto high = compress_high_res_(compress_high_(read_high));
  auto x = refine_low_(low, high);  // stride 8
  x = refine_f2_(f2, x);            // stride 4
  x = refine_f1_(f1, x);            // stride 2
  x = head_(torch::relu(x));
  return F::interpolate(x, F::InterpolateFuncOptions()
                               .scale_factor(std::vector<double>{2.0, 2.0})
                               .mode(torch::kBilinear)
                               .align_corners(false));
}

MmaNetImpl::MmaNetImpl(ModelConfig cfg) : cfg_(std::move(cfg)) {
  cfg_.validate();
  encoder = register_module("encoder", Encoder(cfg_.encoder_channels));
  project_low = register_module(
      "project_low", KeyValueProjection(cfg_.encoder_channels[2], cfg_.low_key_channels(),
                                        cfg_.low_value_channels));
  project_high = register_module(
      "project_high", KeyValueProjection(cfg_.encoder_channels[3], cfg_.high_key_channels(),
                                         cfg_.high_value_channels));
  lgma_low = register_module("lgma_low", Lgma(cfg_.low_key_channels(), cfg_.low_value_channels,
                                               cfg_.memory_size, cfg_.attention_hidden));
  lgma_high = register_module("lgma_high",
                              Lgma(cfg_.high_key_channels(), cfg_.high_value_channels,
                                   cfg_.memory_size, cfg_.attention_hidden));
  decoder = register_module("decoder", Decoder(cfg_));
}

FeaturePyramid MmaNetImpl::encode(const torch::Tensor& images) { return encoder(images); }

std::vector<FrameMemory> MmaNetImpl::encode_frames(const torch::Tensor& images) {
  const FeaturePyramid pyr = encoder(images);
  const KeyValue low = project_low(pyr.low);
  const KeyValue high = project_high(pyr.high);
  std::vector<FrameMemory> out;
  for (std::int64_t i = 0; i < images.size(0); ++i) {
    auto one = [i](const torch::Tensor& t) { return t.narrow(0, i, 1); };
    out.push_back({{one(pyr.f1), one(pyr.f2), one(pyr.low), one(pyr.high)},
                   {one(low.key), one(low.value)},
                   {one(high.key), one(high.value)}});
  }
  return out;
}

torch::Tensor MmaNetImpl::forward(const torch::Tensor& frames, const data::MemorySelection& sel,
                                  ForwardMode mode) {
  std::set<int> needed(sel.local_indices.begin(), sel.local_indices.end());
  needed.insert(sel.query_index);
  if (mode == ForwardMode::kFull && cfg_.use_global_memory) {
    needed.insert(sel.global_indices.begin(), sel.global_indices.end());
  }
  for (int i : needed) {
    if (i < 0 || i >= frames.size(0)) {
      throw ValidationError("memory selection index " + std::to_string(i) +
                            " outside clip of " + std::to_string(frames.size(0)) + " frames");
    }
  }
  const std::vector<std::int64_t> order(needed.begin(), needed.end());
  auto batch = frames.index_select(0, torch::tensor(order, torch::kLong));
  auto encoded_list = encode_frames(batch);
  std::map<int, FrameMemory> encoded;
  for (std::size_t k = 0; k < order.size(); ++k) {
    encoded.emplace(static_cast<int>(order[k]), std::move(encoded_list[k]));
  }
  return forward_encoded(encoded, sel, mode);
}

KeyValue MmaNetImpl::aggregate(Lgma& lgma, const MemoryBank& bank, ForwardMode mode) const {
  if (mode == ForwardMode::kPretrain) {
    std::vector<torch::Tensor> keys, values;
    for (const auto& kv : bank.local) {
      keys.push_back(kv.key);
      values.push_back(kv.value);
    }
    return {mean_aggregate(keys), mean_aggregate(values)};
  }
  return lgma->forward(bank, AggregationFlags{cfg_.use_local_attention, cfg_.use_global_memory});
}

torch::Tensor MmaNetImpl::forward_encoded(const std::map<int, FrameMemory>& encoded,
                                          const data::MemorySelection& sel, ForwardMode mode) {
  auto get = [&](int i) -> const FrameMemory& {
    auto it = encoded.find(i);
    if (it == encoded.end()) {
      throw ValidationError("frame " + std::to_string(i) + " was not encoded");
    }
    return it->second;
  };
  const bool use_global = mode == ForwardMode::kFull && cfg_.use_global_memory;
  MemoryBank low_bank, high_bank;
  for (int i : sel.local_indices) {
    low_bank.local.push_back(get(i).low);
    high_bank.local.push_back(get(i).high);
  }
  if (use_global) {
    for (int i : sel.global_indices) {
      low_bank.global.push_back(get(i).low);
      high_bank.global.push_back(get(i).high);
    }
  }
  const FrameMemory& query = get(sel.query_index);

  const KeyValue high_memory = aggregate(lgma_high, high_bank, mode);
  const auto read_high = memory_read(high_memory, query.high);
  torch::Tensor read_low;
  if (cfg_.multi_level) {
    read_low = memory_read(aggregate(lgma_low, low_bank, mode), query.low);
  } else {
    read_low = torch::cat({torch::zeros_like(query.low.value), query.low.value}, 1);
  }
  return decoder(read_low, read_high, query.features.f1, query.features.f2);
}

torch::Tensor image_to_tensor(const RgbImage& image) {
  auto hwc = torch::from_blob(const_cast<float*>(image.data().data()),
                              {image.height(), image.width(), 3}, torch::kFloat32);
  return hwc.permute({2, 0, 1}).contiguous();
}

torch::Tensor clip_to_tensor(const data::VideoClip& clip) {
  std::vector<torch::Tensor> frames;
  frames.reserve(clip.frames.size());
  for (const auto& f : clip.frames) frames.push_back(image_to_tensor(f));
  return torch::stack(frames, 0);
}

torch::Tensor mask_to_tensor(const InstanceMask& mask) {
  auto t = torch::from_blob(const_cast<std::uint8_t*>(mask.data().data()),
                            {1, mask.height(), mask.width()}, torch::kUInt8);
  return t.to(torch::kLong);
}

InstanceMask logits_to_mask(const torch::Tensor& logits) {
  if (logits.dim() != 4 || logits.size(0) != 1) {
    throw ShapeError("expected (1, K, H, W) logits, got " + shape_str(logits));
  }
  auto labels = logits.argmax(1).squeeze(0).to(torch::kUInt8).contiguous();
  InstanceMask mask(static_cast<int>(labels.size(1)), static_cast<int>(labels.size(0)));
  std::memcpy(mask.data().data(), labels.data_ptr<std::uint8_t>(), mask.data().size());
  return mask;
}

void save_checkpoint(const std::filesystem::path& path, MmaNet& model, int stage) {
  torch::serialize::OutputArchive archive;
  archive.write("format", c10::IValue(std::string("mmanet-checkpoint")));
  archive.write("version", c10::IValue(static_cast<std::int64_t>(kCheckpointVersion)));
  archive.write("stage", c10::IValue(static_cast<std::int64_t>(stage)));
  archive.write("model_config", c10::IValue(to_json(model->config()).dump()));
  model->save(archive);
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  try {
    archive.save_to(path.string());
  } catch (const c10::Error& e) {
    throw IoError("cannot write checkpoint " + path.string() + ": " + e.what_without_backtrace());
  }
}

LoadedCheckpoint load_checkpoint(const std::filesystem::path& path) {
  if (!std::filesystem::exists(path)) throw IoError("checkpoint " + path.string() + " not found");
  torch::serialize::InputArchive archive;
  try {
    archive.load_from(path.string());
  } catch (const c10::Error& e) {
    throw IoError("cannot read checkpoint " + path.string() + ": " + e.what_without_backtrace());
  }
  c10::IValue format, version, stage, config;
  if (!archive.try_read("format", format) || !format.isString() ||
      format.toStringRef() != "mmanet-checkpoint") {
    throw IoError(path.string() + " is not an mmanet checkpoint");
  }
  if (!archive.try_read("version", version) || version.toInt() != kCheckpointVersion) {
    throw IoError(path.string() + ": unsupported checkpoint version");
  }
  archive.read("stage", stage);
  archive.read("model_config", config);

  LoadedCheckpoint out;
  out.stage = static_cast<int>(stage.toInt());
  out.model = MmaNet(model_config_from_json(nlohmann::json::parse(config.toStringRef())));
  try {
    out.model->load(archive);
  } catch (const c10::Error& e) {
    throw IoError("checkpoint " + path.string() + " weights do not fit its config: " +
                  e.what_without_backtrace());
  }
  return out;
}

void copy_parameters(MmaNet& dst, MmaNet& src) {
  torch::NoGradGuard no_grad;
  auto dst_params = dst->named_parameters();
  const auto src_params = src->named_parameters();
  if (dst_params.size() != src_params.size()) {
    throw PreconditionError("parameter sets differ in size");
  }
  for (const auto& item : src_params) {
    auto* target = dst_params.find(item.key());
    if (target == nullptr || !target->sizes().equals(item.value().sizes())) {
      throw PreconditionError("parameter '" + item.key() + "' missing or differently shaped");
    }
    target->copy_(item.value());
  }
}

}  // namespace mmanet::net
