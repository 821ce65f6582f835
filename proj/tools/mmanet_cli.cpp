// mmanet: dataset generation, training, evaluation and visualization of
// memory-aggregation lane detection models.

#include <chrono>
#include <cstdlib>
#include <ctime>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <sstream>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>
#include <openssl/evp.h>
#include <torch/torch.h>

#include "mmanet/config_io.hpp"
#include "mmanet/dataset.hpp"
#include "mmanet/image_io.hpp"
#include "mmanet/metrics.hpp"
#include "mmanet/network.hpp"
#include "mmanet/training.hpp"
#include "visualize.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace mmanet;

namespace {

constexpr const char* kVersion = "0.1.0";
constexpr const char* kDataRootEnv = "MMANET_DATA_ROOT";

enum ExitCode { kOk = 0, kOther = 1, kConfig = 2, kIo = 3, kValidation = 4 };

struct Common {
  std::uint64_t seed = 0;
  std::string config;
  std::string run_dir;
  int threads = 0;
};

std::string sha256_file(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot hash " + path.string());
  EVP_MD_CTX* ctx = EVP_MD_CTX_new();
  EVP_DigestInit_ex(ctx, EVP_sha256(), nullptr);
  std::vector<char> buf(1 << 16);
  while (in) {
    in.read(buf.data(), static_cast<std::streamsize>(buf.size()));
    EVP_DigestUpdate(ctx, buf.data(), static_cast<std::size_t>(in.gcount()));
  }
  unsigned char digest[EVP_MAX_MD_SIZE];
  unsigned int len = 0;
  EVP_DigestFinal_ex(ctx, digest, &len);
  EVP_MD_CTX_free(ctx);
  std::ostringstream hex;
  for (unsigned i = 0; i < len; ++i) {
    hex << std::hex << std::setw(2) << std::setfill('0') << static_cast<int>(digest[i]);
  }
  return hex.str();
}

std::string utc_now() {
  const auto t = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  std::tm tm{};
  gmtime_r(&t, &tm);
  std::ostringstream out;
  out << std::put_time(&tm, "%Y-%m-%dT%H:%M:%SZ");
  return out.str();
}

void write_text(const fs::path& path, const std::string& text) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream out(path);
  if (!out) throw IoError("cannot write " + path.string());
  out << text;
}

// Run manifest: written before any work so failed runs are still described,
// then completed with the artifact list.
class Manifest {
 public:
  Manifest(fs::path run_dir, std::string command, std::vector<std::string> argv,
           const Common& common)
      : run_dir_(std::move(run_dir)) {
    doc_ = {{"tool", "mmanet"},
            {"version", kVersion},
            {"command", std::move(command)},
            {"argv", std::move(argv)},
            {"seed", common.seed},
            {"config_file", common.config},
            {"started", utc_now()},
            {"status", "running"}};
  }

  void set(const std::string& key, json value) { doc_[key] = std::move(value); }

  void begin() {
    fs::create_directories(run_dir_);
    flush();
  }

  void complete() {
    json artifacts = json::array();
    std::vector<fs::path> files;
    for (const auto& e : fs::recursive_directory_iterator(run_dir_)) {
      if (e.is_regular_file() && e.path().filename() != "manifest.json") files.push_back(e.path());
    }
    std::sort(files.begin(), files.end());
    for (const auto& f : files) {
      artifacts.push_back({{"path", fs::relative(f, run_dir_).string()},
                           {"bytes", fs::file_size(f)},
                           {"sha256", sha256_file(f)}});
    }
    doc_["artifacts"] = std::move(artifacts);
    doc_["status"] = "complete";
    doc_["finished"] = utc_now();
    flush();
  }

 private:
  void flush() { write_text(run_dir_ / "manifest.json", doc_.dump(2) + "\n"); }

  fs::path run_dir_;
  json doc_;
};

json read_config(const Common& c) {
  if (c.config.empty()) return json::object();
  json j = load_json_file(c.config);
  if (!j.is_object()) throw ConfigError(c.config + ": top level must be an object");
  return j;
}

json section(const json& cfg, const char* key) {
  return cfg.contains(key) ? cfg.at(key) : json::object();
}

void check_sections(const json& cfg, std::initializer_list<const char*> allowed) {
  for (const auto& item : cfg.items()) {
    if (std::find_if(allowed.begin(), allowed.end(),
                     [&](const char* k) { return item.key() == k; }) == allowed.end()) {
      throw ConfigError("config: unknown section '" + item.key() + "'");
    }
  }
}

std::string resolve_data_root(const std::string& given) {
  if (!given.empty()) return given;
  if (const char* env = std::getenv(kDataRootEnv)) return env;
  throw ConfigError(std::string("no dataset root: pass --data or set ") + kDataRootEnv);
}

std::vector<std::string> resolve_ids(const std::string& root, const std::string& split,
                                     const std::vector<std::string>& clips,
                                     const char* default_split) {
  if (!clips.empty()) return clips;
  const fs::path file = split.empty() ? fs::path(root) / default_split : fs::path(split);
  auto ids = data::read_split(file);
  if (ids.empty()) throw ValidationError("split " + file.string() + " lists no clips");
  return ids;
}

std::vector<data::VideoClip> load_clips(const std::string& root,
                                        const std::vector<std::string>& ids) {
  if (!fs::is_directory(root)) throw IoError("dataset root " + root + " does not exist");
  std::vector<data::VideoClip> clips;
  for (const auto& id : ids) clips.push_back(data::load_vil100_clip(root, id));
  return clips;
}

void write_predictions(const fs::path& dir, const std::string& id,
                       const std::vector<InstanceMask>& masks) {
  for (std::size_t t = 0; t < masks.size(); ++t) {
    io::write_mask(dir / id / (data::frame_stem(static_cast<int>(t)) + ".png"), masks[t]);
  }
}

std::vector<InstanceMask> read_predictions(const fs::path& dir, const data::VideoClip& clip) {
  const fs::path clip_dir = dir / clip.id;
  if (!fs::is_directory(clip_dir)) {
    throw ValidationError("no predictions for clip " + clip.id + " under " + dir.string());
  }
  std::vector<InstanceMask> out;
  for (int t = 0; t < clip.length(); ++t) {
    const fs::path p = clip_dir / (data::frame_stem(t) + ".png");
    if (!fs::exists(p)) {
      throw ValidationError("clip " + clip.id + ": prediction for frame " + std::to_string(t) +
                            " missing");
    }
    out.push_back(io::read_mask(p));
    if (out.back().size() != clip.frame_size()) {
      throw ShapeError("clip " + clip.id + ": prediction frame " + std::to_string(t) + " is " +
                       std::to_string(out.back().width()) + "x" +
                       std::to_string(out.back().height()) + ", expected " +
                       std::to_string(clip.frame_size().width) + "x" +
                       std::to_string(clip.frame_size().height));
    }
  }
  std::size_t extra = 0;
  for (const auto& e : fs::directory_iterator(clip_dir)) extra += e.path().extension() == ".png";
  if (extra != out.size()) {
    throw ValidationError("clip " + clip.id + ": " + std::to_string(extra) +
                          " prediction frames for " + std::to_string(clip.length()) + " frames");
  }
  return out;
}

// ---- generate -------------------------------------------------------------

struct GenerateArgs {
  std::string out;
  int train_clips = 2;
  int test_clips = 2;
  int length = 20;
  int width = 128;
  int height = 64;
  int lanes = 2;
  int occluders = 0;
};

void cmd_generate(const GenerateArgs& a, const Common& c, Manifest& manifest) {
  const json cfg = read_config(c);
  check_sections(cfg, {"scene"});
  data::SyntheticSceneConfig scene;
  scene.length = a.length;
  scene.frame_size = {a.width, a.height};
  scene.n_lanes = a.lanes;
  scene.occluders = a.occluders;
  scene = scene_config_from_json(section(cfg, "scene"), scene);
  if (a.train_clips < 0 || a.test_clips < 0 || a.train_clips + a.test_clips == 0) {
    throw ConfigError("need at least one clip");
  }
  manifest.set("resolved_config", {{"scene", to_json(scene)},
                                   {"train_clips", a.train_clips},
                                   {"test_clips", a.test_clips}});
  manifest.begin();

  const fs::path root = a.out.empty() ? fs::path(c.run_dir) : fs::path(a.out);
  std::vector<std::string> train_ids, test_ids;
  for (int i = 0; i < a.train_clips + a.test_clips; ++i) {
    auto sc = scene;
    sc.seed = c.seed * 1000003ULL + static_cast<std::uint64_t>(i);
    auto clip = data::generate_synthetic_clip(sc);
    std::ostringstream id;
    id << "synth_" << std::setw(3) << std::setfill('0') << i;
    clip.clip.id = id.str();
    data::write_clip(root, clip.clip, clip.annotations);
    (i < a.train_clips ? train_ids : test_ids).push_back(id.str());
  }
  data::write_split(root / "train.txt", train_ids);
  data::write_split(root / "test.txt", test_ids);
  std::cout << "wrote " << train_ids.size() << " train and " << test_ids.size()
            << " test clips to " << root << "\n";
}

// ---- train ----------------------------------------------------------------

struct TrainArgs {
  std::string data;
  std::string split;
  std::vector<std::string> clips;
  std::string variant;
  int memory_frames = 0;
  std::string preset = "desk";
  std::string stage = "both";
  std::string stage1_checkpoint;
  int stage1_iters = 0;
  int stage2_iters = 0;
  bool log = false;
};

void cmd_train(const TrainArgs& a, const Common& c, Manifest& manifest) {
  const json cfg = read_config(c);
  check_sections(cfg, {"model", "stage1", "stage2", "loss"});
  const bool reference = a.preset == "reference";
  net::ModelConfig model_cfg = reference ? net::ModelConfig{} : net::ModelConfig::desk();
  model_cfg = model_config_from_json(section(cfg, "model"), model_cfg);
  if (!a.variant.empty()) model_cfg.set_variant(net::parse_variant(a.variant));
  if (a.memory_frames > 0) model_cfg.memory_size = a.memory_frames;
  model_cfg.validate();

  auto s1 = reference ? train::StageConfig::reference(1) : train::StageConfig::desk(1);
  auto s2 = reference ? train::StageConfig::reference(2) : train::StageConfig::desk(2);
  s1.seed = c.seed;
  s2.seed = c.seed + 1;
  s1 = stage_config_from_json(section(cfg, "stage1"), s1);
  s2 = stage_config_from_json(section(cfg, "stage2"), s2);
  if (a.stage1_iters > 0) s1.iterations = a.stage1_iters;
  if (a.stage2_iters > 0) s2.iterations = a.stage2_iters;
  train::TrainHooks hooks;
  hooks.loss = loss_config_from_json(section(cfg, "loss"));

  const std::string root = resolve_data_root(a.data);
  const auto ids = resolve_ids(root, a.split, a.clips, "train.txt");
  manifest.set("resolved_config", {{"model", to_json(model_cfg)},
                                   {"stage1", to_json(s1)},
                                   {"stage2", to_json(s2)},
                                   {"loss", to_json(hooks.loss)},
                                   {"variant", net::variant_name(model_cfg.variant())},
                                   {"stages", a.stage}});
  manifest.set("inputs", {{"data_root", root}, {"clips", ids}});
  manifest.begin();

  const auto clips = load_clips(root, ids);
  const fs::path run(c.run_dir);
  std::ofstream log_file(run / "train_log.txt");
  hooks.log = &log_file;
  torch::manual_seed(c.seed);
  net::MmaNet model(model_cfg);

  std::string jsonl;
  fs::path stage1_path = a.stage1_checkpoint.empty() ? run / "stage1.pt" : fs::path(a.stage1_checkpoint);
  if (a.stage == "1" || a.stage == "both") {
    const auto r1 = train::train_stage1(model, clips, s1, hooks);
    net::save_checkpoint(run / "stage1.pt", model, 1);
    stage1_path = run / "stage1.pt";
    jsonl += train::train_report_to_jsonl(r1);
    std::cout << "stage 1: " << train::train_report_summary(r1) << "\n";
  }
  if (a.stage == "2" || a.stage == "both") {
    const auto r2 = train::train_stage2(model, stage1_path, clips, s2, hooks);
    jsonl += train::train_report_to_jsonl(r2);
    std::cout << "stage 2: " << train::train_report_summary(r2) << "\n";
  }
  net::save_checkpoint(run / "model.pt", model, a.stage == "1" ? 1 : 2);
  write_text(run / "train_report.jsonl", jsonl);
}

// ---- eval / infer ---------------------------------------------------------

struct EvalArgs {
  std::string checkpoint;
  std::string data;
  std::string split;
  std::vector<std::string> clips;
  std::string predictions;
  bool oracle = false;
  std::vector<std::string> baselines;
  std::string name;
  double boundary_tolerance = -1.0;
  bool per_frame_recall = false;
};

void cmd_eval(const EvalArgs& a, const Common& c, Manifest& manifest) {
  const std::string root = resolve_data_root(a.data);
  const auto ids = resolve_ids(root, a.split, a.clips, "test.txt");
  const int sources = (a.oracle ? 1 : 0) + (!a.predictions.empty() ? 1 : 0) +
                      (!a.checkpoint.empty() ? 1 : 0);
  if (sources != 1) {
    throw ConfigError("eval needs exactly one of --checkpoint, --predictions or --oracle");
  }
  metrics::EvalConfig eval;
  eval.video.boundary_tolerance_px = a.boundary_tolerance;
  eval.video.per_frame_recall = a.per_frame_recall;
  manifest.set("inputs", {{"data_root", root},
                          {"clips", ids},
                          {"checkpoint", a.checkpoint},
                          {"predictions", a.predictions},
                          {"oracle", a.oracle},
                          {"baselines", a.baselines}});
  manifest.begin();

  std::vector<metrics::MetricReport> baselines;
  for (const auto& b : a.baselines) {
    std::ifstream in(b);
    if (!in) throw IoError("cannot open baseline report " + b);
    std::stringstream ss;
    ss << in.rdbuf();
    baselines.push_back(metrics::report_from_jsonl(ss.str()));
    if (baselines.back().name.empty()) baselines.back().name = fs::path(b).stem().string();
  }

  const auto clips = load_clips(root, ids);
  net::MmaNet model{nullptr};
  if (!a.checkpoint.empty()) model = net::load_checkpoint(a.checkpoint).model;
  const fs::path run(c.run_dir);
  std::vector<metrics::MaskSequence> pred, gt;
  for (const auto& clip : clips) {
    if (a.oracle) {
      pred.push_back(clip.masks);
    } else if (!a.predictions.empty()) {
      pred.push_back(read_predictions(a.predictions, clip));
    } else {
      train::PredictOptions opts;
      opts.seed = c.seed;
      pred.push_back(train::predict_clip(model, clip, opts));
      write_predictions(run / "predictions", clip.id, pred.back());
    }
    gt.push_back(clip.masks);
  }
  auto report = metrics::evaluate(ids, pred, gt, eval);
  report.name = !a.name.empty() ? a.name
                : a.oracle      ? "oracle"
                : !a.checkpoint.empty() ? fs::path(a.checkpoint).stem().string()
                                        : "predictions";
  write_text(run / "report.jsonl", metrics::report_to_jsonl(report));
  std::vector<metrics::MetricReport> table = baselines;
  table.push_back(report);
  const auto text = metrics::format_table(table);
  write_text(run / "table.txt", text);
  std::cout << text;
}

struct InferArgs {
  std::string checkpoint;
  std::string data;
  std::string split;
  std::vector<std::string> clips;
  bool resize = false;
};

void cmd_infer(const InferArgs& a, const Common& c, Manifest& manifest) {
  const std::string root = resolve_data_root(a.data);
  const auto ids = resolve_ids(root, a.split, a.clips, "test.txt");
  manifest.set("inputs", {{"data_root", root}, {"clips", ids}, {"checkpoint", a.checkpoint}});
  manifest.begin();
  auto model = net::load_checkpoint(a.checkpoint).model;
  train::PredictOptions opts;
  opts.seed = c.seed;
  opts.resize_to_multiple = a.resize;
  for (const auto& clip : load_clips(root, ids)) {
    write_predictions(fs::path(c.run_dir) / "predictions", clip.id,
                      train::predict_clip(model, clip, opts));
    std::cout << "predicted " << clip.id << " (" << clip.length() << " frames)\n";
  }
}

// ---- stats ----------------------------------------------------------------

void cmd_stats(const std::string& data, const Common& c, Manifest& manifest) {
  const std::string root = resolve_data_root(data);
  manifest.set("inputs", {{"data_root", root}});
  manifest.begin();
  const auto s = geometry::compute_dataset_stats(root);
  json line_types = json::object();
  for (int t = 0; t < geometry::kNumLineTypes; ++t) {
    line_types[geometry::line_type_name(static_cast<geometry::LineType>(t))] =
        s.line_type_counts[t];
  }
  const json out = {{"videos", s.videos},
                    {"frames", s.frames},
                    {"lanes", s.lanes},
                    {"frames_per_lane_count", s.frames_per_lane_count},
                    {"line_types", line_types},
                    {"scenarios", s.scenario_counts}};
  write_text(fs::path(c.run_dir) / "stats.json", out.dump(2) + "\n");
  std::cout << out.dump(2) << "\n";
}

// ---- visualize ------------------------------------------------------------

struct VisualizeArgs {
  std::string predictions;
  std::string data;
  std::string clip;
};

void cmd_visualize(const VisualizeArgs& a, const Common& c, Manifest& manifest) {
  const std::string root = resolve_data_root(a.data);
  manifest.set("inputs", {{"data_root", root}, {"clip", a.clip}, {"predictions", a.predictions}});
  manifest.begin();
  const auto clip = load_clips(root, {a.clip}).front();
  const auto pred = read_predictions(a.predictions, clip);
  const fs::path out = fs::path(c.run_dir) / "overlays" / clip.id;
  viz::Series j{"J", {}}, f{"F", {}};
  for (int t = 0; t < clip.length(); ++t) {
    io::write_rgb(out / (data::frame_stem(t) + ".png"), viz::overlay(clip.frames[t], pred[t]));
    j.values.push_back(metrics::frame_jaccard(pred[t], clip.masks[t]));
    f.values.push_back(metrics::boundary_f_measure(pred[t], clip.masks[t]));
  }
  viz::write_line_plot((fs::path(c.run_dir) / ("scores_" + clip.id + ".png")).string(), {j, f},
                       "per-frame scores: " + clip.id);
  std::cout << "wrote " << clip.length() << " overlays and 1 plot for " << clip.id << "\n";
}

void add_common(CLI::App* sub, Common& c, const std::string& name) {
  sub->add_option("--seed", c.seed, "Random seed");
  sub->add_option("--config", c.config, "JSON config file; flags override its fields");
  sub->add_option("--run-dir", c.run_dir, "Output directory (default runs/" + name + ")");
  sub->add_option("--threads", c.threads, "Intra-op threads (0 keeps the library default)");
}

int run(int argc, char** argv);

int replay(const std::string& manifest_path, const std::string& run_dir) {
  const json m = load_json_file(manifest_path);
  if (!m.contains("argv") || !m.at("argv").is_array()) {
    throw ConfigError(manifest_path + " has no argv");
  }
  std::vector<std::string> args = m.at("argv").get<std::vector<std::string>>();
  if (!run_dir.empty()) {
    bool replaced = false;
    for (std::size_t i = 0; i + 1 < args.size(); ++i) {
      if (args[i] == "--run-dir") {
        args[i + 1] = run_dir;
        replaced = true;
      }
    }
    if (!replaced) {
      args.push_back("--run-dir");
      args.push_back(run_dir);
    }
  }
  std::vector<char*> ptrs;
  for (auto& s : args) ptrs.push_back(s.data());
  return run(static_cast<int>(ptrs.size()), ptrs.data());
}

int run(int argc, char** argv) {
  CLI::App app{"Lane detection with local-global memory aggregation"};
  app.require_subcommand(1);
  app.set_version_flag("--version", kVersion);
  std::vector<std::string> args(argv, argv + argc);

  Common common;
  GenerateArgs gen;
  auto* g = app.add_subcommand("generate", "Write a synthetic clip dataset");
  add_common(g, common, "generate");
  g->add_option("--out", gen.out, "Dataset root (default: the run directory)");
  g->add_option("--train-clips", gen.train_clips);
  g->add_option("--test-clips", gen.test_clips);
  g->add_option("--length", gen.length, "Frames per clip");
  g->add_option("--width", gen.width);
  g->add_option("--height", gen.height);
  g->add_option("--lanes", gen.lanes)->check(CLI::Range(1, 6));
  g->add_option("--occluders", gen.occluders);

  TrainArgs tr;
  auto* t = app.add_subcommand("train", "Two-stage training");
  add_common(t, common, "train");
  t->add_option("--data", tr.data, std::string("Dataset root (default $") + kDataRootEnv + ")");
  t->add_option("--split", tr.split, "Split file (default <data>/train.txt)");
  t->add_option("--clip", tr.clips, "Clip id; repeatable, overrides --split");
  t->add_option("--variant", tr.variant)
      ->check(CLI::IsMember(net::variant_names()));
  t->add_option("--memory-frames", tr.memory_frames)->check(CLI::IsMember({3, 5, 7}));
  t->add_option("--preset", tr.preset)->check(CLI::IsMember({"desk", "reference"}));
  t->add_option("--stage", tr.stage)->check(CLI::IsMember({"1", "2", "both"}));
  t->add_option("--stage1-checkpoint", tr.stage1_checkpoint,
                "Existing stage-1 checkpoint for --stage 2");
  t->add_option("--stage1-iters", tr.stage1_iters);
  t->add_option("--stage2-iters", tr.stage2_iters);

  EvalArgs ev;
  auto* e = app.add_subcommand("eval", "Evaluate a checkpoint or stored predictions");
  add_common(e, common, "eval");
  e->add_option("--checkpoint", ev.checkpoint);
  e->add_option("--data", ev.data);
  e->add_option("--split", ev.split, "Split file (default <data>/test.txt)");
  e->add_option("--clip", ev.clips);
  e->add_option("--predictions", ev.predictions, "Directory of <clip>/<frame>.png masks");
  e->add_flag("--oracle", ev.oracle, "Score the ground truth against itself");
  e->add_option("--baseline", ev.baselines, "Stored report.jsonl to compare against");
  e->add_option("--name", ev.name, "Row label in the comparison table");
  e->add_option("--boundary-tolerance", ev.boundary_tolerance, "px; negative selects default");
  e->add_flag("--per-frame-recall", ev.per_frame_recall);

  InferArgs in;
  auto* i = app.add_subcommand("infer", "Write predicted masks");
  add_common(i, common, "infer");
  i->add_option("--checkpoint", in.checkpoint)->required();
  i->add_option("--data", in.data);
  i->add_option("--split", in.split);
  i->add_option("--clip", in.clips);
  i->add_flag("--resize", in.resize, "Resize frames not divisible by 16");

  std::string stats_data;
  auto* s = app.add_subcommand("stats", "Lane-count and line-type statistics");
  add_common(s, common, "stats");
  s->add_option("--data", stats_data);

  VisualizeArgs vz;
  auto* v = app.add_subcommand("visualize", "Overlay predictions and plot per-frame scores");
  add_common(v, common, "visualize");
  v->add_option("--predictions", vz.predictions)->required();
  v->add_option("--data", vz.data);
  v->add_option("--clip", vz.clip)->required();

  std::string manifest_path, replay_dir;
  auto* r = app.add_subcommand("replay", "Re-run the command recorded in a manifest");
  r->add_option("manifest", manifest_path)->required();
  r->add_option("--run-dir", replay_dir);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& err) {
    const int code = app.exit(err);
    return code == 0 ? kOk : kConfig;
  }

  if (r->parsed()) return replay(manifest_path, replay_dir);
  if (common.threads > 0) torch::set_num_threads(common.threads);
  const auto* sub = app.get_subcommands().front();
  if (common.run_dir.empty()) common.run_dir = "runs/" + sub->get_name();
  Manifest manifest(common.run_dir, sub->get_name(), args, common);

  if (g->parsed()) cmd_generate(gen, common, manifest);
  if (t->parsed()) cmd_train(tr, common, manifest);
  if (e->parsed()) cmd_eval(ev, common, manifest);
  if (i->parsed()) cmd_infer(in, common, manifest);
  if (s->parsed()) cmd_stats(stats_data, common, manifest);
  if (v->parsed()) cmd_visualize(vz, common, manifest);
  manifest.complete();
  return kOk;
}

}  // namespace

int main(int argc, char** argv) {
  try {
    return run(argc, argv);
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return kConfig;
  } catch (const IoError& e) {
    std::cerr << "I/O error: " << e.what() << "\n";
    return kIo;
  } catch (const ValidationError& e) {
    std::cerr << "validation error: " << e.what() << "\n";
    return kValidation;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kOther;
  }
}
