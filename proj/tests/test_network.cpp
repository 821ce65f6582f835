#include <cmath>
#include <filesystem>
#include <fstream>
#include <random>

#include <gtest/gtest.h>

#include "mmanet/network.hpp"

namespace net = mmanet::net;
namespace data = mmanet::data;

namespace {

net::ModelConfig tiny_config() {
  net::ModelConfig cfg;
  cfg.encoder_channels = {4, 6, 8, 8};
  cfg.low_value_channels = 8;
  cfg.high_value_channels = 8;
  cfg.decoder_channels = 6;
  cfg.attention_hidden = 4;
  cfg.memory_size = 3;
  return cfg;
}

// Randomises every parameter so zero-initialised layers do not hide bugs.
void randomize(torch::nn::Module& module, std::uint64_t seed) {
  torch::manual_seed(seed);
  torch::NoGradGuard no_grad;
  for (auto& p : module.parameters()) p.uniform_(-0.5, 0.5);
}

// Per-location readout computed with explicit loops in double precision.
torch::Tensor memory_read_oracle(const net::KeyValue& mem, const net::KeyValue& q) {
  auto mk = mem.key.to(torch::kDouble), mv = mem.value.to(torch::kDouble);
  auto qk = q.key.to(torch::kDouble);
  const auto ck = mk.size(1), cv = mv.size(1);
  const auto h = mk.size(2), w = mk.size(3);
  auto out = torch::zeros({1, cv, h, w}, torch::kDouble);
  auto mka = mk.accessor<double, 4>(), mva = mv.accessor<double, 4>(), qka = qk.accessor<double, 4>();
  auto oa = out.accessor<double, 4>();
  for (int py = 0; py < h; ++py) {
    for (int px = 0; px < w; ++px) {
      std::vector<double> logits;
      for (int my = 0; my < h; ++my) {
        for (int mx = 0; mx < w; ++mx) {
          double dot = 0;
          for (int c = 0; c < ck; ++c) dot += qka[0][c][py][px] * mka[0][c][my][mx];
          logits.push_back(dot / std::sqrt(double(ck)));
        }
      }
      const double mx_logit = *std::max_element(logits.begin(), logits.end());
      double z = 0;
      for (auto& l : logits) z += (l = std::exp(l - mx_logit));
      for (int c = 0; c < cv; ++c) {
        double acc = 0;
        for (int m = 0; m < h * w; ++m) acc += logits[m] / z * mva[0][c][m / w][m % w];
        oa[0][c][py][px] = acc;
      }
    }
  }
  return torch::cat({out, q.value.to(torch::kDouble)}, 1);
}

data::MemorySelection selection(int length, int t, int n, std::vector<int> perm = {}) {
  if (perm.empty()) {
    perm.resize(length);
    for (int i = 0; i < length; ++i) perm[i] = i;
  }
  return data::select_memory_frames(length, t, perm, n);
}

}  // namespace

TEST(Variant, NamesAndFlags) {
  for (const auto& name : net::variant_names()) {
    net::ModelConfig cfg;
    cfg.set_variant(net::parse_variant(name));
    EXPECT_EQ(net::variant_name(cfg.variant()), name);
  }
  net::ModelConfig basic;
  basic.set_variant(net::Variant::kBasic);
  EXPECT_FALSE(basic.use_local_attention || basic.use_global_memory || basic.multi_level);
  net::ModelConfig lgm;
  lgm.set_variant(net::Variant::kLocalGlobal);
  EXPECT_TRUE(lgm.use_local_attention && lgm.use_global_memory && !lgm.multi_level);
  EXPECT_THROW(net::parse_variant("fancy"), mmanet::ConfigError);
}

TEST(Variant, InvalidCombinationListsVariants) {
  net::ModelConfig cfg;
  cfg.use_local_attention = true;
  cfg.use_global_memory = false;
  cfg.multi_level = true;
  try {
    cfg.validate();
    FAIL() << "expected ConfigError";
  } catch (const mmanet::ConfigError& e) {
    const std::string msg = e.what();
    for (const char* v : {"basic", "lm", "gm", "lgm", "full"}) {
      EXPECT_NE(msg.find(v), std::string::npos) << v;
    }
  }
  EXPECT_THROW(net::MmaNet{cfg}, mmanet::ConfigError);
}

TEST(AttentionBlock, ConvexCombinationMatchesLoopOracle) {
  net::AttentionBlock block(3, 4, 5);
  randomize(*block, 1);
  std::vector<torch::Tensor> maps;
  for (int i = 0; i < 4; ++i) maps.push_back(torch::randn({2, 3, 5, 6}));
  const auto out = block(maps);
  ASSERT_EQ(out.weights.sizes(), (std::vector<int64_t>{2, 4, 5, 6}));
  auto w = out.weights.accessor<float, 4>();
  auto agg = out.aggregated.accessor<float, 4>();
  for (int b = 0; b < 2; ++b) {
    for (int y = 0; y < 5; ++y) {
      for (int x = 0; x < 6; ++x) {
        double sum = 0;
        for (int i = 0; i < 4; ++i) {
          EXPECT_GE(w[b][i][y][x], 0.0f);
          sum += w[b][i][y][x];
        }
        EXPECT_NEAR(sum, 1.0, 1e-5);
        for (int c = 0; c < 3; ++c) {
          double expect = 0;
          for (int i = 0; i < 4; ++i) expect += w[b][i][y][x] * maps[i][b][c][y][x].item<double>();
          EXPECT_NEAR(agg[b][c][y][x], expect, 1e-5);
        }
      }
    }
  }
}

TEST(AttentionBlock, StartsAsUniformMean) {
  net::AttentionBlock block(3, 5, 4);
  std::vector<torch::Tensor> maps;
  for (int i = 0; i < 5; ++i) maps.push_back(torch::randn({1, 3, 4, 4}));
  const auto out = block(maps);
  EXPECT_TRUE(torch::allclose(out.weights, torch::full_like(out.weights, 0.2)));
  EXPECT_TRUE(torch::allclose(out.aggregated, net::mean_aggregate(maps), 1e-6, 1e-6));
}

TEST(AttentionBlock, RejectsWrongInputs) {
  net::AttentionBlock block(3, 2, 4);
  EXPECT_THROW(block->forward({torch::zeros({1, 3, 4, 4})}), mmanet::ShapeError);
  EXPECT_THROW(block->forward({torch::zeros({1, 3, 4, 4}), torch::zeros({1, 2, 4, 4})}), mmanet::ShapeError);
}

TEST(Lgma, FlagsSelectTerms) {
  net::Lgma lgma(2, 3, 3, 4);
  randomize(*lgma, 2);
  net::MemoryBank bank;
  for (int i = 0; i < 3; ++i) {
    bank.local.push_back({torch::randn({1, 2, 4, 4}), torch::randn({1, 3, 4, 4})});
    bank.global.push_back({torch::randn({1, 2, 4, 4}), torch::randn({1, 3, 4, 4})});
  }
  auto keys = [](const std::vector<net::KeyValue>& kv) {
    std::vector<torch::Tensor> out;
    for (const auto& p : kv) out.push_back(p.key);
    return out;
  };
  const auto mean_only = lgma->forward(bank, {false, false});
  EXPECT_TRUE(torch::allclose(mean_only.key, net::mean_aggregate(keys(bank.local))));
  const auto full = lgma->forward(bank, {true, true});
  const auto expect = lgma->key_local(keys(bank.local)).aggregated +
                      lgma->key_global(keys(bank.global)).aggregated;
  EXPECT_TRUE(torch::allclose(full.key, expect));
  bank.global.pop_back();
  EXPECT_THROW(lgma->forward(bank, {true, true}), mmanet::ValidationError);
}

TEST(MemoryRead, MatchesLoopOracle) {
  torch::manual_seed(3);
  net::KeyValue mem{torch::randn({1, 4, 3, 5}), torch::randn({1, 6, 3, 5})};
  net::KeyValue query{torch::randn({1, 4, 3, 5}), torch::randn({1, 6, 3, 5})};
  const auto got = net::memory_read(mem, query).to(torch::kDouble);
  const auto expect = memory_read_oracle(mem, query);
  EXPECT_LT((got - expect).abs().max().item<double>(), 1e-5);
}

TEST(MemoryRead, AffinityRowsAreStochastic) {
  const auto a = net::memory_affinity(torch::randn({2, 4, 3, 3}), torch::randn({2, 4, 3, 3}));
  ASSERT_EQ(a.sizes(), (std::vector<int64_t>{2, 9, 9}));
  EXPECT_LT((a.sum(2) - 1).abs().max().item<double>(), 1e-5);
  EXPECT_GE(a.min().item<double>(), 0.0);
}

TEST(MemoryRead, RejectsLevelMismatch) {
  net::KeyValue low{torch::zeros({1, 4, 8, 8}), torch::zeros({1, 6, 8, 8})};
  net::KeyValue high{torch::zeros({1, 4, 4, 4}), torch::zeros({1, 6, 4, 4})};
  EXPECT_THROW(net::memory_read(low, high), mmanet::ShapeError);
  net::KeyValue wrong_channels{torch::zeros({1, 2, 8, 8}), torch::zeros({1, 6, 8, 8})};
  EXPECT_THROW(net::memory_read(low, wrong_channels), mmanet::ShapeError);
}

TEST(Encoder, StridesAndDivisibility) {
  net::Encoder enc(std::array<std::int64_t, 4>{4, 6, 8, 10});
  const auto pyr = enc(torch::rand({2, 3, 32, 64}));
  EXPECT_EQ(pyr.f1.sizes(), (std::vector<int64_t>{2, 4, 16, 32}));
  EXPECT_EQ(pyr.f2.sizes(), (std::vector<int64_t>{2, 6, 8, 16}));
  EXPECT_EQ(pyr.low.sizes(), (std::vector<int64_t>{2, 8, 4, 8}));
  EXPECT_EQ(pyr.high.sizes(), (std::vector<int64_t>{2, 10, 2, 4}));
  EXPECT_THROW(enc(torch::rand({1, 3, 30, 64})), mmanet::ShapeError);
  EXPECT_THROW(enc(torch::rand({1, 1, 32, 64})), mmanet::ShapeError);
}

TEST(MmaNet, OutputShapeForEveryVariant) {
  const auto frames = torch::rand({6, 3, 32, 48});
  for (const auto& name : net::variant_names()) {
    auto cfg = tiny_config();
    cfg.set_variant(net::parse_variant(name));
    net::MmaNet model(cfg);
    const auto logits = model->forward(frames, selection(6, 4, 3));
    EXPECT_EQ(logits.sizes(), (std::vector<int64_t>{1, 9, 32, 48})) << name;
  }
}

TEST(MmaNet, BasicMatchesReferenceComposition) {
  auto cfg = tiny_config();
  cfg.set_variant(net::Variant::kBasic);
  net::MmaNet model(cfg);
  randomize(*model, 4);
  const auto frames = torch::rand({5, 3, 32, 32});
  const auto sel = selection(5, 4, 3);
  const auto got = model->forward(frames, sel);

  // Mean of the local high-level keys/values, one read, and a zero memory
  // half at the low level.
  auto pyr = model->encoder(frames);
  auto high = model->project_high(pyr.high);
  auto low = model->project_low(pyr.low);
  auto idx = torch::tensor(std::vector<int64_t>{1, 2, 3});
  net::KeyValue mem{high.key.index_select(0, idx).mean(0, true),
                    high.value.index_select(0, idx).mean(0, true)};
  net::KeyValue q{high.key.narrow(0, 4, 1), high.value.narrow(0, 4, 1)};
  const auto read_high = memory_read_oracle(mem, q).to(torch::kFloat);
  const auto q_low = low.value.narrow(0, 4, 1);
  const auto read_low = torch::cat({torch::zeros_like(q_low), q_low}, 1);
  const auto expect =
      model->decoder(read_low, read_high, pyr.f1.narrow(0, 4, 1), pyr.f2.narrow(0, 4, 1));
  EXPECT_LT((got - expect).abs().max().item<double>(), 1e-4);
}

TEST(MmaNet, BasicIsInvariantToLocalMemoryOrder) {
  auto cfg = tiny_config();
  cfg.set_variant(net::Variant::kBasic);
  net::MmaNet model(cfg);
  randomize(*model, 5);
  const auto frames = torch::rand({6, 3, 32, 32});
  auto sel = selection(6, 5, 3);
  const auto a = model->forward(frames, sel);
  std::reverse(sel.local_indices.begin(), sel.local_indices.end());
  const auto b = model->forward(frames, sel);
  EXPECT_LE((a - b).abs().max().item<double>(), 1e-5 * a.abs().max().item<double>());
}

TEST(MmaNet, PretrainIgnoresGlobalMemory) {
  net::MmaNet model(tiny_config());
  randomize(*model, 6);
  const auto frames = torch::rand({8, 3, 32, 32});
  auto sel = data::select_memory_frames(8, 5, {7, 6, 0, 1, 2, 5, 3, 4}, 2);
  const auto a = model->forward(frames, sel, net::ForwardMode::kPretrain);
  sel.global_indices = {3, 4};
  const auto b = model->forward(frames, sel, net::ForwardMode::kPretrain);
  EXPECT_TRUE(torch::equal(a, b));
  EXPECT_THROW(model->forward(frames, sel), mmanet::ValidationError);  // wrong memory size
}

TEST(MmaNet, EncodedPathMatchesDirectForward) {
  net::MmaNet model(tiny_config());
  randomize(*model, 7);
  const auto frames = torch::rand({7, 3, 32, 32});
  const auto sel = data::select_memory_frames(7, 6, {3, 0, 6, 5, 1, 4, 2}, 3);
  const auto direct = model->forward(frames, sel);
  auto encodings = model->encode_frames(frames);
  std::map<int, net::FrameMemory> encoded;
  for (int i = 0; i < 7; ++i) encoded.emplace(i, encodings[i]);
  const auto cached = model->forward_encoded(encoded, sel);
  EXPECT_TRUE(torch::allclose(direct, cached, 1e-5, 1e-5));
  encoded.erase(3);
  EXPECT_THROW(model->forward_encoded(encoded, sel), mmanet::ValidationError);
}

TEST(Tensors, MaskAndImageConversion) {
  mmanet::InstanceMask mask(3, 2);
  mask.at(2, 1) = 7;
  const auto t = net::mask_to_tensor(mask);
  EXPECT_EQ(t.sizes(), (std::vector<int64_t>{1, 2, 3}));
  EXPECT_EQ(t[0][1][2].item<int64_t>(), 7);
  auto logits = torch::zeros({1, 9, 2, 3});
  logits[0][7][1][2] = 1.0;
  EXPECT_EQ(net::logits_to_mask(logits), mask);
  mmanet::RgbImage img(3, 2);
  img.set(1, 0, 0.1f, 0.2f, 0.3f);
  const auto it = net::image_to_tensor(img);
  EXPECT_FLOAT_EQ(it[2][0][1].item<float>(), 0.3f);
}

TEST(Checkpoint, RoundTripPreservesOutputs) {
  const auto path = std::filesystem::temp_directory_path() / "mmanet_ckpt_test.pt";
  net::MmaNet model(tiny_config());
  randomize(*model, 8);
  net::save_checkpoint(path, model, 2);
  auto loaded = net::load_checkpoint(path);
  EXPECT_EQ(loaded.stage, 2);
  EXPECT_EQ(loaded.model->config(), model->config());
  const auto frames = torch::rand({4, 3, 32, 32});
  const auto sel = selection(4, 3, 3);
  EXPECT_TRUE(torch::equal(model->forward(frames, sel), loaded.model->forward(frames, sel)));

  net::MmaNet other(tiny_config());
  net::copy_parameters(other, model);
  EXPECT_TRUE(torch::equal(model->forward(frames, sel), other->forward(frames, sel)));
  std::filesystem::remove(path);
}

TEST(Checkpoint, RejectsBadFiles) {
  const auto dir = std::filesystem::temp_directory_path();
  EXPECT_THROW(net::load_checkpoint(dir / "does_not_exist.pt"), mmanet::IoError);
  const auto junk = dir / "mmanet_junk.pt";
  std::ofstream(junk) << "not a checkpoint";
  EXPECT_THROW(net::load_checkpoint(junk), mmanet::IoError);
  std::filesystem::remove(junk);

  auto wide = tiny_config();
  wide.decoder_channels = 8;
  net::MmaNet a(tiny_config()), b(wide);
  EXPECT_THROW(net::copy_parameters(a, b), mmanet::PreconditionError);
}
