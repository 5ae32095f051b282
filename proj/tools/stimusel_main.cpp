// stimusel: event-driven frame sampling, tube selection, affective
// evaluation metrics, instruction-record generation, and overlay export,
// behind one subcommand CLI.
//
// Global flags: --config FILE (key=value lines; flags override file
// values, file values override defaults), --out DIR, --jobs N, --seed S,
// --log-level LEVEL. Errors leave a single machine-readable JSON line on
// stderr. Remote endpoints read STIMUSEL_API_URL / STIMUSEL_API_KEY.

#include <cstdlib>
#include <fstream>
#include <iostream>
#include <map>
#include <memory>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "stimusel/artifacts.hpp"
#include "stimusel/chat_client.hpp"
#include "stimusel/error.hpp"
#include "stimusel/event_sampler.hpp"
#include "stimusel/frames.hpp"
#include "stimusel/instructgen.hpp"
#include "stimusel/metrics.hpp"
#include "stimusel/optical_flow.hpp"
#include "stimusel/tensor.hpp"
#include "stimusel/tube_selector.hpp"
#include "stimusel/viz.hpp"

namespace {

using nlohmann::ordered_json;
namespace fs = std::filesystem;
using namespace stimusel;

enum class LogLevel { kQuiet = 0, kError = 1, kWarn = 2, kInfo = 3, kDebug = 4 };
LogLevel g_log_level = LogLevel::kInfo;

void logmsg(LogLevel level, const std::string& message) {
  if (level > g_log_level || g_log_level == LogLevel::kQuiet) return;
  const char* tag = "info";
  if (level == LogLevel::kError) tag = "error";
  else if (level == LogLevel::kWarn) tag = "warn";
  else if (level == LogLevel::kDebug) tag = "debug";
  std::cerr << "[" << tag << "] " << message << "\n";
}

LogLevel parse_log_level(const std::string& name) {
  if (name == "quiet") return LogLevel::kQuiet;
  if (name == "error") return LogLevel::kError;
  if (name == "warn") return LogLevel::kWarn;
  if (name == "info") return LogLevel::kInfo;
  if (name == "debug") return LogLevel::kDebug;
  throw Error("unknown log level: " + name + " (expected quiet|error|warn|info|debug)");
}

void emit_error_json(const std::string& type, const std::string& message) {
  ordered_json doc;
  doc["error"] = {{"type", type}, {"message", message}};
  std::cerr << doc.dump() << "\n";
}

// --- config file layering ------------------------------------------------

std::map<std::string, std::string> read_config_kv(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw Error("cannot open config file: " + path.string());
  std::map<std::string, std::string> out;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    const std::size_t start = line.find_first_not_of(" \t");
    if (start == std::string::npos) continue;
    if (line[start] == '#') continue;
    const std::size_t eq = line.find('=', start);
    if (eq == std::string::npos)
      throw Error(path.string() + ":" + std::to_string(lineno) + ": expected key=value");
    std::string key = line.substr(start, eq - start);
    std::string value = line.substr(eq + 1);
    auto strip = [](std::string& s) {
      const std::size_t b = s.find_first_not_of(" \t");
      const std::size_t e = s.find_last_not_of(" \t\r");
      s = (b == std::string::npos) ? std::string() : s.substr(b, e - b + 1);
    };
    strip(key);
    strip(value);
    if (key.empty())
      throw Error(path.string() + ":" + std::to_string(lineno) + ": empty key");
    out[key] = value;
  }
  return out;
}

// Applies file values as extra "--key=value" args for every key the
// active subcommand (or the top-level app) understands and the command
// line did not already set, preserving flags > file > defaults.
std::vector<std::string> layer_config(const std::vector<std::string>& args, const CLI::App& app) {
  std::string config_path;
  for (std::size_t i = 0; i < args.size(); ++i) {
    if (args[i] == "--config" && i + 1 < args.size()) config_path = args[i + 1];
    else if (args[i].rfind("--config=", 0) == 0) config_path = args[i].substr(9);
  }
  if (config_path.empty()) return args;

  const CLI::App* scope = &app;
  for (const auto& arg : args) {
    if (const CLI::App* sub = app.get_subcommand_no_throw(arg)) {
      scope = sub;
      break;
    }
  }

  std::vector<std::string> out = args;
  for (const auto& [key, value] : read_config_kv(config_path)) {
    std::string flag = "--" + key;
    for (auto& c : flag)
      if (c == '_') c = '-';
    bool already = false;
    for (const auto& arg : args) {
      if (arg == flag || arg.rfind(flag + "=", 0) == 0) {
        already = true;
        break;
      }
    }
    if (already) continue;
    const bool known = scope->get_option_no_throw(flag) != nullptr ||
                       app.get_option_no_throw(flag) != nullptr;
    if (!known) {
      logmsg(LogLevel::kWarn, "config key '" + key + "' does not apply to this command; ignored");
      continue;
    }
    out.push_back(flag + "=" + value);
  }
  return out;
}

// --- shared option bundles ----------------------------------------------

struct GlobalOpts {
  std::string config_file;
  std::string out_dir = ".";
  int jobs = 1;
  std::uint64_t seed = 0;
  std::string log_level = "info";
};

struct SamplerOpts {
  std::size_t n = 6;
  std::size_t p = 2;
  std::size_t d = 5;
  double sigma = 2.0;
  std::int64_t min_distance = -1;  // -1: default 2d+1
  double prominence_frac = 0.1;

  SamplerConfig to_config() const {
    SamplerConfig cfg;
    cfg.n = n;
    cfg.p = p;
    cfg.d = d;
    cfg.sigma = sigma;
    if (min_distance >= 0) cfg.min_distance = static_cast<std::size_t>(min_distance);
    cfg.prominence_frac = prominence_frac;
    cfg.validate();
    return cfg;
  }
};

struct FlowOpts {
  int window_radius = 2;
  double presmooth_sigma = 1.0;
  double eps = 1e-6;
  int downscale = 1;

  FlowParams to_params() const {
    FlowParams params;
    params.window_radius = window_radius;
    params.presmooth_sigma = presmooth_sigma;
    params.eps = eps;
    params.downscale = downscale;
    params.validate();
    return params;
  }
};

void add_sampler_flags(CLI::App* cmd, SamplerOpts& opts) {
  cmd->add_option("--n", opts.n, "frame budget");
  cmd->add_option("--p", opts.p, "max event windows");
  cmd->add_option("--d", opts.d, "event window half-width in frames");
  cmd->add_option("--sigma", opts.sigma, "gaussian smoothing sigma for the flow curve");
  cmd->add_option("--min-distance", opts.min_distance,
                  "peak suppression distance (default 2d+1)");
  cmd->add_option("--prominence-frac", opts.prominence_frac,
                  "peak prominence threshold as a fraction of the smoothed curve range");
}

void add_flow_flags(CLI::App* cmd, FlowOpts& opts) {
  cmd->add_option("--flow-window", opts.window_radius, "flow window radius in pixels");
  cmd->add_option("--flow-presmooth", opts.presmooth_sigma, "presmoothing sigma in pixels");
  cmd->add_option("--flow-eps", opts.eps, "normal-equation regularizer");
  cmd->add_option("--flow-downscale", opts.downscale, "integer downscale before flow");
}

ordered_json sampler_flow_config(const SamplerOpts& sampler, const FlowOpts& flow,
                                 const GlobalOpts& global) {
  ordered_json cfg;
  cfg["sampler"] = sampler_config_to_json(sampler.to_config());
  cfg["flow"] = flow_params_to_json(flow.to_params());
  cfg["jobs"] = global.jobs;
  return cfg;
}

std::array<std::size_t, 3> parse_triple(const std::string& text, const std::string& what) {
  std::array<std::size_t, 3> out{};
  std::size_t pos = 0;
  for (int i = 0; i < 3; ++i) {
    const std::size_t comma = text.find(',', pos);
    const std::string part =
        (i == 2) ? text.substr(pos) : text.substr(pos, comma - pos);
    if (part.empty() || (i < 2 && comma == std::string::npos))
      throw Error(what + " must be three comma-separated integers, got: " + text);
    try {
      out[i] = std::stoull(part);
    } catch (const std::exception&) {
      throw Error(what + " must be three comma-separated integers, got: " + text);
    }
    pos = (i == 2) ? pos : comma + 1;
  }
  return out;
}

std::vector<std::size_t> parse_size_list(const std::string& text, const std::string& what) {
  std::vector<std::size_t> out;
  std::size_t pos = 0;
  while (pos <= text.size()) {
    const std::size_t comma = text.find(',', pos);
    const std::string part =
        (comma == std::string::npos) ? text.substr(pos) : text.substr(pos, comma - pos);
    if (part.empty()) throw Error(what + " has an empty element: " + text);
    try {
      out.push_back(std::stoull(part));
    } catch (const std::exception&) {
      throw Error(what + " must be comma-separated integers, got: " + text);
    }
    if (comma == std::string::npos) break;
    pos = comma + 1;
  }
  if (out.empty()) throw Error(what + " is empty");
  return out;
}

// --- commands ------------------------------------------------------------

struct SampleOpts {
  std::string frames_dir;
  SamplerOpts sampler;
  FlowOpts flow;
};

int run_sample(const GlobalOpts& global, const SampleOpts& opts) {
  const VideoFrames video = load_frame_sequence(opts.frames_dir, FrameMode::kGray);
  logmsg(LogLevel::kInfo, "loaded " + std::to_string(video.frame_count()) + " frames from " +
                              opts.frames_dir);
  const SamplingPlan plan =
      sample_frames(video, opts.sampler.to_config(), opts.flow.to_params(), global.jobs);

  ordered_json doc = artifact_envelope("sample", sampler_flow_config(opts.sampler, opts.flow, global));
  doc["source_id"] = video.source_id;
  doc["frames_dir"] = opts.frames_dir;
  doc.update(plan_to_json(plan));

  fs::create_directories(global.out_dir);
  const fs::path out_path = fs::path(global.out_dir) / "plan.json";
  write_json_artifact(out_path, doc);
  std::cout << doc.dump(2) << "\n";
  logmsg(LogLevel::kInfo, "wrote " + out_path.string());
  return 0;
}

struct FlowcurveOpts {
  std::string frames_dir;
  SamplerOpts sampler;
  FlowOpts flow;
};

int run_flowcurve(const GlobalOpts& global, const FlowcurveOpts& opts) {
  const VideoFrames video = load_frame_sequence(opts.frames_dir, FrameMode::kGray);
  if (video.frame_count() < 2) throw Error("flowcurve needs at least 2 frames");
  const SamplerConfig cfg = opts.sampler.to_config();
  const FlowCurve curve = flow_curve_for(video, cfg, opts.flow.to_params(), global.jobs);

  double lo = curve.smoothed[0];
  double hi = curve.smoothed[0];
  for (double v : curve.smoothed) {
    lo = std::min(lo, v);
    hi = std::max(hi, v);
  }
  const std::vector<std::size_t> peak_indices =
      find_peaks(curve.smoothed, cfg.effective_min_distance(), cfg.prominence_frac * (hi - lo));
  std::vector<Peak> peaks;
  for (std::size_t idx : peak_indices) peaks.push_back({idx, curve.smoothed[idx]});
  const EventPartition partition =
      build_partition(peaks, curve.smoothed.size(), video.frame_count(), cfg.p, cfg.d);

  const ordered_json cfg_json = sampler_flow_config(opts.sampler, opts.flow, global);
  fs::create_directories(global.out_dir);
  const fs::path csv_path = fs::path(global.out_dir) / "curve.csv";
  const fs::path svg_path = fs::path(global.out_dir) / "curve.svg";
  export_curve(curve, peak_indices, partition.windows, csv_path, svg_path, cfg_json.dump());
  logmsg(LogLevel::kInfo, "wrote " + csv_path.string() + " and " + svg_path.string());
  std::cout << "curve points: " << curve.raw.size() << ", peaks kept: " << peak_indices.size()
            << ", windows: " << partition.windows.size() << "\n";
  return 0;
}

struct TubesOpts {
  std::string tokens_path;
  std::string cls_path;
  std::string weights_path;
  std::size_t hidden = 0;  // 0: C/4 rounded up
  std::string activation = "gelu";
  std::string tube = "2,4,4";
  std::string stride;  // empty: same as tube
  std::size_t topk = 4;
  bool emit_tokens = false;
  bool emit_heatmap = false;
};

int run_tubes(const GlobalOpts& global, const TubesOpts& opts) {
  TokenGrid grid;
  grid.patch_tokens = read_tensor(opts.tokens_path);
  if (!opts.cls_path.empty()) grid.cls_tokens = read_tensor(opts.cls_path);
  grid.validate();

  ScorerWeights weights;
  std::string weights_desc;
  if (!opts.weights_path.empty()) {
    weights = scorer_from_bundle(read_bundle(opts.weights_path));
    weights_desc = opts.weights_path;
  } else {
    const std::size_t hidden = opts.hidden ? opts.hidden : (grid.channels() + 3) / 4;
    weights = make_random_scorer(grid.channels(), hidden, global.seed,
                                 activation_from_name(opts.activation));
    weights_desc = "random(seed=" + std::to_string(global.seed) + ")";
  }

  TubeGeometry geo;
  geo.shape = parse_triple(opts.tube, "--tube");
  geo.stride = opts.stride.empty() ? geo.shape : parse_triple(opts.stride, "--stride");

  const TubePipelineResult result = select_pipeline(grid, weights, geo, opts.topk);

  ordered_json cfg;
  cfg["tokens"] = opts.tokens_path;
  cfg["cls"] = opts.cls_path;
  cfg["weights"] = weights_desc;
  cfg["hidden"] = weights.hidden();
  cfg["activation"] = activation_name(weights.activation);
  cfg["tube"] = geo.shape;
  cfg["stride"] = geo.stride;
  cfg["topk"] = opts.topk;
  cfg["seed"] = global.seed;

  ordered_json doc = artifact_envelope("tubes", cfg);
  doc.update(selection_to_json(result, geo, opts.topk));

  fs::create_directories(global.out_dir);
  write_json_artifact(fs::path(global.out_dir) / "selection.json", doc);
  if (opts.emit_tokens) {
    WeightBundle bundle;
    bundle.entries["spatial"] = result.tokens.spatial;
    if (result.tokens.temporal) bundle.entries["temporal"] = *result.tokens.temporal;
    write_bundle(bundle, fs::path(global.out_dir) / "tokens.stvb");
  }
  if (opts.emit_heatmap) {
    write_tensor(result.score_volume, fs::path(global.out_dir) / "heatmap.stvt");
  }
  std::cout << doc.dump(2) << "\n";
  return 0;
}

struct EvalOpts {
  std::string records_path;
  std::string taxonomy_path;
  std::string topk = "1,2,3";
  std::string emb_dir;
  bool remote_classifier = false;
  std::string fixtures_dir;
  std::string api_url;
  std::string model = "gpt-3.5-turbo";
};

std::unique_ptr<ChatClient> make_chat_client(const std::string& fixtures_dir,
                                             const std::string& api_url_flag,
                                             const std::string& model) {
  if (!fixtures_dir.empty()) return std::make_unique<FixtureChatClient>(fixtures_dir);
  std::string url = api_url_flag;
  if (url.empty()) {
    if (const char* env = std::getenv("STIMUSEL_API_URL")) url = env;
  }
  if (url.empty())
    throw Error("no endpoint configured: pass --fixtures, --api-url, or set STIMUSEL_API_URL");
  HttpChatConfig cfg;
  cfg.url = url;
  cfg.model = model;
  if (const char* key = std::getenv("STIMUSEL_API_KEY")) cfg.api_key = key;
  return std::make_unique<HttpChatClient>(cfg);
}

int run_eval(const GlobalOpts& global, const EvalOpts& opts) {
  const std::vector<EvalRecord> records = read_records_jsonl(opts.records_path);
  const EmotionTaxonomy taxonomy = EmotionTaxonomy::from_json_file(opts.taxonomy_path);
  const std::vector<std::size_t> ks = parse_size_list(opts.topk, "--topk");

  std::unique_ptr<ChatClient> remote;
  std::unique_ptr<TextEmotionClassifier> classifier;
  if (opts.remote_classifier) {
    remote = make_chat_client(opts.fixtures_dir, opts.api_url, opts.model);
    classifier = std::make_unique<RemoteClassifier>(*remote);
  } else {
    classifier = std::make_unique<LexiconClassifier>();
  }

  ordered_json top_k = ordered_json::object();
  for (std::size_t k : ks) top_k[std::to_string(k)] = top_k_accuracy(records, k);

  std::size_t align_correct = 0;
  std::size_t unresolved = 0;
  std::vector<RecordFlags> flags(records.size());
  for (std::size_t i = 0; i < records.size(); ++i) {
    const EvalRecord& rec = records[i];
    const EmoAlignOutcome outcome = emo_align(rec, *classifier, taxonomy);
    if (!outcome.resolved) ++unresolved;
    if (outcome.correct) ++align_correct;
    flags[i].reasoning_correct = outcome.correct;
    flags[i].prediction_correct =
        !rec.predictions.empty() &&
        normalize_label(rec.predictions[0]) == normalize_label(rec.label);
  }
  const double align_acc = 100.0 * static_cast<double>(align_correct) /
                           static_cast<double>(records.size());
  const DoublyRightReport dr = doubly_right(flags);

  std::vector<std::pair<int, int>> judge_pairs;
  for (const auto& rec : records) {
    if (rec.judge_ours && rec.judge_baseline)
      judge_pairs.emplace_back(*rec.judge_ours, *rec.judge_baseline);
  }

  ordered_json clip_json;
  if (!opts.emb_dir.empty()) {
    double sum = 0.0;
    std::size_t covered = 0;
    std::size_t missing = 0;
    for (const auto& rec : records) {
      const fs::path frames_path = fs::path(opts.emb_dir) / (rec.item_id + ".frames.stvt");
      const fs::path text_path = fs::path(opts.emb_dir) / (rec.item_id + ".text.stvt");
      if (!fs::exists(frames_path) || !fs::exists(text_path)) {
        ++missing;
        continue;
      }
      sum += 100.0 * clip_score(read_tensor(frames_path), read_tensor(text_path));
      ++covered;
    }
    if (missing > 0)
      logmsg(LogLevel::kWarn, std::to_string(missing) + " records have no embedding bundle");
    clip_json["mean"] = covered ? sum / static_cast<double>(covered) : 0.0;
    clip_json["covered"] = covered;
    clip_json["missing"] = missing;
  }

  ordered_json cfg;
  cfg["records"] = opts.records_path;
  cfg["taxonomy"] = opts.taxonomy_path;
  cfg["topk"] = ks;
  cfg["classifier"] = classifier->id();
  cfg["emb_dir"] = opts.emb_dir;

  ordered_json doc = artifact_envelope("eval", cfg);
  doc["records_evaluated"] = records.size();
  doc["top_k"] = top_k;
  doc["emo_align"] = {{"accuracy", align_acc},
                      {"resolved", records.size() - unresolved},
                      {"unresolved", unresolved}};
  doc["doubly_right"] = {{"rr", dr.rr}, {"rw", dr.rw}, {"wr", dr.wr}, {"ww", dr.ww}};
  if (!judge_pairs.empty()) {
    const JudgeSummary judge = judge_aggregate(judge_pairs);
    doc["judge"] = {{"win", judge.win},
                    {"lose", judge.lose},
                    {"tie", judge.tie},
                    {"avg_ours", judge.avg_ours},
                    {"pairs", judge_pairs.size()}};
  } else {
    doc["judge"] = nullptr;
  }
  doc["clip_s"] = opts.emb_dir.empty() ? ordered_json(nullptr) : clip_json;

  fs::create_directories(global.out_dir);
  const fs::path out_path = fs::path(global.out_dir) / "report.json";
  write_json_artifact(out_path, doc);

  char line[128];
  for (std::size_t k : ks) {
    std::snprintf(line, sizeof(line), "top-%zu: %.1f", k,
                  top_k[std::to_string(k)].get<double>());
    std::cout << line << "\n";
  }
  std::snprintf(line, sizeof(line), "emo-align: %.1f", align_acc);
  std::cout << line << "\n";
  std::snprintf(line, sizeof(line), "doubly-right rr/rw/wr/ww: %.1f/%.1f/%.1f/%.1f", dr.rr, dr.rw,
                dr.wr, dr.ww);
  std::cout << line << "\n";
  logmsg(LogLevel::kInfo, "wrote " + out_path.string());
  return 0;
}

struct InstructgenOpts {
  std::string manifest_path;
  std::string taxonomy_path;
  std::string out_path = "records.jsonl";
  std::string checkpoint_path;
  std::string fixtures_dir;
  std::string api_url;
  std::string captioner_model = "gpt-3.5-turbo";
  std::string summarizer_model = "gpt-3.5-turbo";
  std::string reasoner_model = "gpt-3.5-turbo";
  SamplerOpts sampler;
  FlowOpts flow;
};

int run_instructgen(const GlobalOpts& global, const InstructgenOpts& opts) {
  const std::vector<ManifestEntry> manifest = read_manifest(opts.manifest_path);
  const EmotionTaxonomy taxonomy = EmotionTaxonomy::from_json_file(opts.taxonomy_path);

  std::unique_ptr<ChatClient> caption_client =
      make_chat_client(opts.fixtures_dir, opts.api_url, opts.captioner_model);
  std::unique_ptr<ChatClient> summarize_client =
      make_chat_client(opts.fixtures_dir, opts.api_url, opts.summarizer_model);
  std::unique_ptr<ChatClient> reason_client =
      make_chat_client(opts.fixtures_dir, opts.api_url, opts.reasoner_model);
  ChatFrameCaptioner captioner(*caption_client);

  BatchClients clients;
  clients.captioner = &captioner;
  clients.summarizer = summarize_client.get();
  clients.reasoner = reason_client.get();

  BatchOptions options;
  options.sampler = opts.sampler.to_config();
  options.flow = opts.flow.to_params();
  options.jobs = global.jobs;
  // Replay runs must not embed wall-clock time, or double runs diverge.
  if (!opts.fixtures_dir.empty() && std::getenv("STIMUSEL_TIMESTAMP") == nullptr) {
    options.created_at = "1970-01-01T00:00:00Z";
  }

  const fs::path out_path = opts.out_path;
  const fs::path checkpoint_path =
      opts.checkpoint_path.empty() ? fs::path(opts.out_path + ".checkpoint.json")
                                   : fs::path(opts.checkpoint_path);
  if (out_path.has_parent_path()) fs::create_directories(out_path.parent_path());

  const BatchResult result =
      run_batch(manifest, clients, taxonomy, out_path, checkpoint_path, options);

  std::cout << "written: " << result.written << ", skipped: " << result.skipped
            << ", failed: " << result.failed << "\n";
  if (result.failed > 0) {
    const Checkpoint cp = Checkpoint::load(checkpoint_path);
    for (const auto& [id, msg] : cp.failed)
      logmsg(LogLevel::kWarn, "failed " + id + ": " + msg);
  }
  // A run where every attempted video failed indicates a broken setup,
  // not per-video flakiness.
  if (result.failed > 0 && result.written == 0 && result.skipped == 0) return 1;
  return 0;
}

struct VizOpts {
  std::string frames_dir;
  std::string plan_path;
  std::string heatmap_path;
};

int run_viz(const GlobalOpts& global, const VizOpts& opts) {
  const VideoFrames video = load_frame_sequence(opts.frames_dir, FrameMode::kRgb);
  const Tensor heatmap = read_tensor(opts.heatmap_path);

  std::ifstream plan_in(opts.plan_path);
  if (!plan_in) throw Error("cannot open plan: " + opts.plan_path);
  nlohmann::json plan_doc;
  try {
    plan_doc = nlohmann::json::parse(plan_in);
  } catch (const nlohmann::json::exception& e) {
    throw Error("plan " + opts.plan_path + " is not valid JSON: " + std::string(e.what()));
  }
  if (!plan_doc.contains("indices")) throw Error("plan " + opts.plan_path + " has no indices");
  SamplingPlan plan;
  for (const auto& idx : plan_doc["indices"]) plan.indices.push_back(idx.get<std::size_t>());

  const fs::path overlay_dir = fs::path(global.out_dir) / "overlays";
  const std::vector<fs::path> files = render_overlay(video, heatmap, plan, overlay_dir);

  ordered_json cfg;
  cfg["frames"] = opts.frames_dir;
  cfg["plan"] = opts.plan_path;
  cfg["heatmap"] = opts.heatmap_path;
  ordered_json doc = artifact_envelope("viz", cfg);
  ordered_json names = ordered_json::array();
  for (const auto& f : files) names.push_back(f.filename().string());
  doc["files"] = names;
  write_json_artifact(fs::path(global.out_dir) / "overlay_meta.json", doc);

  std::cout << "wrote " << files.size() << " overlay images to " << overlay_dir.string() << "\n";
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  GlobalOpts global;
  CLI::App app{"stimuli-aware video frame sampling, tube selection, and affect evaluation"};
  app.require_subcommand(1);
  app.add_option("--config", global.config_file, "key=value config file (flags take precedence)");
  app.add_option("--out", global.out_dir, "output directory for artifacts");
  app.add_option("--jobs", global.jobs, "worker threads")->check(CLI::PositiveNumber);
  app.add_option("--seed", global.seed, "seed for randomized weights");
  app.add_option("--log-level", global.log_level, "quiet|error|warn|info|debug");

  SampleOpts sample_opts;
  CLI::App* sample_cmd = app.add_subcommand("sample", "event-driven frame sampling plan");
  sample_cmd->fallthrough();
  sample_cmd->add_option("--frames", sample_opts.frames_dir, "directory of .pgm/.png frames")
      ->required();
  add_sampler_flags(sample_cmd, sample_opts.sampler);
  add_flow_flags(sample_cmd, sample_opts.flow);

  FlowcurveOpts flowcurve_opts;
  CLI::App* flowcurve_cmd = app.add_subcommand("flowcurve", "per-frame motion curve CSV + SVG");
  flowcurve_cmd->fallthrough();
  flowcurve_cmd->add_option("--frames", flowcurve_opts.frames_dir, "directory of frames")
      ->required();
  add_sampler_flags(flowcurve_cmd, flowcurve_opts.sampler);
  add_flow_flags(flowcurve_cmd, flowcurve_opts.flow);

  TubesOpts tubes_opts;
  CLI::App* tubes_cmd = app.add_subcommand("tubes", "score tokens and select top-k tubes");
  tubes_cmd->fallthrough();
  tubes_cmd->add_option("--tokens", tubes_opts.tokens_path, "patch tokens tensor [N, L, C]")
      ->required();
  tubes_cmd->add_option("--cls", tubes_opts.cls_path, "cls tokens tensor [N, C]");
  tubes_cmd->add_option("--weights", tubes_opts.weights_path,
                        "scorer weight bundle (absent: random from --seed)");
  tubes_cmd->add_option("--hidden", tubes_opts.hidden,
                        "hidden width for random weights (0: C/4 rounded up)");
  tubes_cmd->add_option("--activation", tubes_opts.activation,
                        "gelu|relu|tanh|identity for random weights");
  tubes_cmd->add_option("--tube", tubes_opts.tube, "tube shape t,h,w");
  tubes_cmd->add_option("--stride", tubes_opts.stride, "tube stride t,h,w (default: shape)");
  tubes_cmd->add_option("--topk", tubes_opts.topk, "tubes to keep");
  tubes_cmd->add_flag("--emit-tokens", tubes_opts.emit_tokens, "write gathered tokens bundle");
  tubes_cmd->add_flag("--emit-heatmap", tubes_opts.emit_heatmap, "write score volume tensor");

  EvalOpts eval_opts;
  CLI::App* eval_cmd = app.add_subcommand("eval", "metric report over a JSONL record set");
  eval_cmd->fallthrough();
  eval_cmd->add_option("--records", eval_opts.records_path, "records JSONL")->required();
  eval_cmd->add_option("--taxonomy", eval_opts.taxonomy_path, "taxonomy JSON")->required();
  eval_cmd->add_option("--topk", eval_opts.topk, "comma list of k values");
  eval_cmd->add_option("--emb-dir", eval_opts.emb_dir,
                       "directory of <item_id>.frames.stvt / <item_id>.text.stvt embeddings");
  eval_cmd->add_flag("--remote-classifier", eval_opts.remote_classifier,
                     "resolve reasoning emotions through a chat endpoint");
  eval_cmd->add_option("--fixtures", eval_opts.fixtures_dir, "fixture dir for the chat endpoint");
  eval_cmd->add_option("--api-url", eval_opts.api_url, "chat endpoint (default STIMUSEL_API_URL)");
  eval_cmd->add_option("--model", eval_opts.model, "chat model name");

  InstructgenOpts instruct_opts;
  CLI::App* instruct_cmd =
      app.add_subcommand("instructgen", "generate instruction records from a video manifest");
  instruct_cmd->fallthrough();
  instruct_cmd->add_option("--videos", instruct_opts.manifest_path,
                           "manifest JSONL of {video_id, frames_dir, emotion}")
      ->required();
  instruct_cmd->add_option("--taxonomy", instruct_opts.taxonomy_path, "taxonomy JSON")->required();
  instruct_cmd->add_option("--out", instruct_opts.out_path, "output records JSONL");
  instruct_cmd->add_option("--checkpoint", instruct_opts.checkpoint_path,
                           "checkpoint path (default <out>.checkpoint.json)");
  instruct_cmd->add_option("--fixtures", instruct_opts.fixtures_dir,
                           "fixture dir: replay all three client roles");
  instruct_cmd->add_option("--api-url", instruct_opts.api_url,
                           "chat endpoint (default STIMUSEL_API_URL)");
  instruct_cmd->add_option("--captioner-model", instruct_opts.captioner_model, "captioner model");
  instruct_cmd->add_option("--summarizer-model", instruct_opts.summarizer_model,
                           "summarizer model");
  instruct_cmd->add_option("--reasoner-model", instruct_opts.reasoner_model, "reasoner model");
  add_sampler_flags(instruct_cmd, instruct_opts.sampler);
  add_flow_flags(instruct_cmd, instruct_opts.flow);

  VizOpts viz_opts;
  CLI::App* viz_cmd = app.add_subcommand("viz", "overlay heatmaps on sampled frames");
  viz_cmd->fallthrough();
  viz_cmd->add_option("--frames", viz_opts.frames_dir, "directory of frames")->required();
  viz_cmd->add_option("--plan", viz_opts.plan_path, "plan.json from the sample command")
      ->required();
  viz_cmd->add_option("--heatmap", viz_opts.heatmap_path, "score volume tensor [N, G, G]")
      ->required();

  std::vector<std::string> args(argv + 1, argv + argc);
  try {
    args = layer_config(args, app);
  } catch (const std::exception& e) {
    emit_error_json("config", e.what());
    return 2;
  }

  try {
    std::vector<const char*> cargs;
    cargs.push_back(argv[0]);
    for (const auto& a : args) cargs.push_back(a.c_str());
    app.parse(static_cast<int>(cargs.size()), cargs.data());
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    emit_error_json("usage", e.what());
    return 2;
  }

  try {
    g_log_level = parse_log_level(global.log_level);
    if (sample_cmd->parsed()) return run_sample(global, sample_opts);
    if (flowcurve_cmd->parsed()) return run_flowcurve(global, flowcurve_opts);
    if (tubes_cmd->parsed()) return run_tubes(global, tubes_opts);
    if (eval_cmd->parsed()) return run_eval(global, eval_opts);
    if (instruct_cmd->parsed()) return run_instructgen(global, instruct_opts);
    if (viz_cmd->parsed()) return run_viz(global, viz_opts);
    emit_error_json("usage", "no command selected");
    return 2;
  } catch (const std::exception& e) {
    emit_error_json("runtime", e.what());
    return 1;
  }
}
