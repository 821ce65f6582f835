#include "mmanet/config_io.hpp"

#include <fstream>
#include <set>

namespace mmanet {
namespace {

using nlohmann::json;

class FieldReader {
 public:
  FieldReader(const json& j, std::string what) : j_(j), what_(std::move(what)) {
    if (!j_.is_object()) throw ConfigError(what_ + " must be a JSON object");
  }

  template <class T>
  void read(const char* key, T& out) {
    known_.insert(key);
    if (!j_.contains(key)) return;
    try {
      out = j_.at(key).get<T>();
    } catch (const json::exception& e) {
      throw ConfigError(what_ + "." + key + ": " + e.what());
    }
  }

  bool has(const char* key) {
    known_.insert(key);
    return j_.contains(key);
  }

  const json& at(const char* key) const { return j_.at(key); }

  void finish() const {
    for (const auto& item : j_.items()) {
      if (!known_.count(item.key())) {
        throw ConfigError(what_ + ": unknown key '" + item.key() + "'");
      }
    }
  }

 private:
  const json& j_;
  std::string what_;
  std::set<std::string> known_;
};

}  // namespace

json to_json(const net::ModelConfig& cfg) {
  return {{"encoder_channels", cfg.encoder_channels},
          {"low_value_channels", cfg.low_value_channels},
          {"high_value_channels", cfg.high_value_channels},
          {"decoder_channels", cfg.decoder_channels},
          {"attention_hidden", cfg.attention_hidden},
          {"memory_size", cfg.memory_size},
          {"use_local_attention", cfg.use_local_attention},
          {"use_global_memory", cfg.use_global_memory},
          {"multi_level", cfg.multi_level},
          {"num_classes", cfg.num_classes}};
}

net::ModelConfig model_config_from_json(const json& j, net::ModelConfig base) {
  FieldReader r(j, "model");
  r.read("encoder_channels", base.encoder_channels);
  r.read("low_value_channels", base.low_value_channels);
  r.read("high_value_channels", base.high_value_channels);
  r.read("decoder_channels", base.decoder_channels);
  r.read("attention_hidden", base.attention_hidden);
  r.read("memory_size", base.memory_size);
  r.read("use_local_attention", base.use_local_attention);
  r.read("use_global_memory", base.use_global_memory);
  r.read("multi_level", base.multi_level);
  r.read("num_classes", base.num_classes);
  if (r.has("variant")) {
    if (!r.at("variant").is_string()) throw ConfigError("model.variant must be a string");
    base.set_variant(net::parse_variant(r.at("variant").get<std::string>()));
  }
  r.finish();
  base.validate();
  return base;
}

json to_json(const train::StageConfig& cfg) {
  return {{"stage", cfg.stage},
          {"optimizer", cfg.optimizer == train::OptimizerKind::kAdam ? "adam" : "sgd"},
          {"lr", cfg.lr},
          {"momentum", cfg.momentum},
          {"weight_decay", cfg.weight_decay},
          {"iterations", cfg.iterations},
          {"batch_size", cfg.batch_size},
          {"seed", cfg.seed},
          {"hflip_probability", cfg.hflip_probability},
          {"eval_every_epochs", cfg.eval_every_epochs}};
}

train::StageConfig stage_config_from_json(const json& j, train::StageConfig base) {
  FieldReader r(j, "stage" + std::to_string(base.stage));
  r.read("stage", base.stage);
  if (r.has("optimizer")) {
    const auto name = r.at("optimizer").is_string() ? r.at("optimizer").get<std::string>() : "";
    if (name == "adam") {
      base.optimizer = train::OptimizerKind::kAdam;
    } else if (name == "sgd") {
      base.optimizer = train::OptimizerKind::kSgd;
    } else {
      throw ConfigError("optimizer must be \"adam\" or \"sgd\"");
    }
  }
  r.read("lr", base.lr);
  r.read("momentum", base.momentum);
  r.read("weight_decay", base.weight_decay);
  r.read("iterations", base.iterations);
  r.read("batch_size", base.batch_size);
  r.read("seed", base.seed);
  r.read("hflip_probability", base.hflip_probability);
  r.read("eval_every_epochs", base.eval_every_epochs);
  r.finish();
  base.validate();
  return base;
}

json to_json(const train::LossConfig& cfg) {
  return {{"ce_weight", cfg.ce_weight},
          {"iou_weight", cfg.iou_weight},
          {"class_weights", cfg.class_weights}};
}

train::LossConfig loss_config_from_json(const json& j, train::LossConfig base) {
  FieldReader r(j, "loss");
  r.read("ce_weight", base.ce_weight);
  r.read("iou_weight", base.iou_weight);
  r.read("class_weights", base.class_weights);
  r.finish();
  base.validate();
  return base;
}

json to_json(const data::SyntheticSceneConfig& cfg) {
  return {{"seed", cfg.seed},
          {"n_lanes", cfg.n_lanes},
          {"curvature_px", cfg.curvature_px},
          {"lane_spacing", cfg.lane_spacing},
          {"noise", cfg.noise},
          {"occluders", cfg.occluders},
          {"width", cfg.frame_size.width},
          {"height", cfg.frame_size.height},
          {"length", cfg.length},
          {"brightness", cfg.brightness},
          {"haze", cfg.haze}};
}

data::SyntheticSceneConfig scene_config_from_json(const json& j, data::SyntheticSceneConfig base) {
  FieldReader r(j, "scene");
  r.read("seed", base.seed);
  r.read("n_lanes", base.n_lanes);
  r.read("curvature_px", base.curvature_px);
  r.read("lane_spacing", base.lane_spacing);
  r.read("noise", base.noise);
  r.read("occluders", base.occluders);
  r.read("width", base.frame_size.width);
  r.read("height", base.frame_size.height);
  r.read("length", base.length);
  r.read("brightness", base.brightness);
  r.read("haze", base.haze);
  r.finish();
  base.validate();
  return base;
}

json load_json_file(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open config " + path.string());
  try {
    return json::parse(in);
  } catch (const json::parse_error& e) {
    throw ConfigError(path.string() + ": " + e.what());
  }
}

}  // namespace mmanet
