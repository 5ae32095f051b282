#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <sys/wait.h>

#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <sstream>

#include <nlohmann/json.hpp>

#include "stimusel/chat_client.hpp"
#include "stimusel/event_sampler.hpp"
#include "stimusel/frames.hpp"
#include "stimusel/instructgen.hpp"
#include "stimusel/tensor.hpp"
#include "test_util.hpp"

using testutil::TempDir;

using nlohmann::json;
using stimusel::ChatMessage;
using stimusel::Tensor;

namespace {

struct CommandResult {
  int exit_code = -1;
  std::string out;
  std::string err;
};

std::string read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  std::ostringstream buf;
  buf << in.rdbuf();
  return buf.str();
}

CommandResult run_cli(const std::string& args, const std::filesystem::path& scratch) {
  const auto out_file = scratch / "stdout.txt";
  const auto err_file = scratch / "stderr.txt";
  const std::string command = std::string(STIMUSEL_CLI_PATH) + " " + args + " >" +
                              out_file.string() + " 2>" + err_file.string();
  const int status = std::system(command.c_str());
  CommandResult result;
  result.exit_code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
  result.out = read_file(out_file);
  result.err = read_file(err_file);
  return result;
}

json last_stderr_json(const CommandResult& result) {
  std::stringstream ss(result.err);
  std::string line;
  std::string last;
  while (std::getline(ss, line))
    if (!line.empty()) last = line;
  REQUIRE(!last.empty());
  return json::parse(last);
}

void write_flat_video(const std::filesystem::path& dir, std::size_t frames, int side) {
  std::filesystem::create_directories(dir);
  for (std::size_t f = 0; f < frames; ++f) {
    std::vector<std::uint8_t> gray(static_cast<std::size_t>(side * side),
                                   static_cast<std::uint8_t>(40 + f));
    char name[32];
    std::snprintf(name, sizeof(name), "f%03zu.pgm", f);
    stimusel::write_pgm(dir / name, side, side, gray);
  }
}

// Captures requests so fixture files can be recorded against the exact
// prompts the pipeline will send.
class CaptureClient final : public stimusel::ChatClient {
 public:
  std::string complete(const std::vector<ChatMessage>& messages) override {
    calls.push_back(messages);
    return "capture";
  }
  std::string id() const override { return "capture"; }
  std::vector<std::vector<ChatMessage>> calls;
};

}  // namespace

TEST_CASE("help exits cleanly") {
  TempDir dir("cli");
  const auto result = run_cli("--help", dir.path());
  REQUIRE(result.exit_code == 0);
  REQUIRE(result.out.find("sample") != std::string::npos);
}

TEST_CASE("sample writes a plan with the requested budget") {
  TempDir dir("cli");
  write_flat_video(dir / "frames", 12, 16);
  const auto result =
      run_cli("--out " + (dir / "out").string() + " sample --frames " + (dir / "frames").string() +
                  " --n 6",
              dir.path());
  REQUIRE(result.exit_code == 0);

  const auto plan_path = dir / "out" / "plan.json";
  REQUIRE(std::filesystem::exists(plan_path));
  const json doc = json::parse(read_file(plan_path));
  REQUIRE(doc["schema_version"] == 1);
  REQUIRE(doc["command"] == "sample");
  REQUIRE(doc["config"]["sampler"]["n"] == 6);
  REQUIRE(doc["indices"].size() == 6);
  REQUIRE(doc["total_frames"] == 12);
  REQUIRE(doc["source_id"] == "frames");
  // A static video has no events, so the plan is the uniform fallback.
  REQUIRE(doc["windows"].empty());
  // Stdout carries the same document for piping.
  REQUIRE(json::parse(result.out) == doc);
}

TEST_CASE("sample runs are byte-deterministic") {
  TempDir dir("cli");
  write_flat_video(dir / "frames", 10, 16);
  const std::string tail = " sample --frames " + (dir / "frames").string() + " --n 4";
  REQUIRE(run_cli("--out " + (dir / "a").string() + tail, dir.path()).exit_code == 0);
  REQUIRE(run_cli("--out " + (dir / "b").string() + tail, dir.path()).exit_code == 0);
  REQUIRE(read_file(dir / "a" / "plan.json") == read_file(dir / "b" / "plan.json"));
}

TEST_CASE("unknown flags fail with a usage error and write nothing") {
  TempDir dir("cli");
  write_flat_video(dir / "frames", 4, 16);
  const auto result =
      run_cli("--out " + (dir / "out").string() + " sample --frames " +
                  (dir / "frames").string() + " --definitely-not-a-flag 3",
              dir.path());
  REQUIRE(result.exit_code == 2);
  const json err = last_stderr_json(result);
  REQUIRE(err["error"]["type"] == "usage");
  REQUIRE(!std::filesystem::exists(dir / "out" / "plan.json"));
}

TEST_CASE("a missing required option is a usage error") {
  TempDir dir("cli");
  const auto result = run_cli("sample", dir.path());
  REQUIRE(result.exit_code == 2);
  REQUIRE(last_stderr_json(result)["error"]["type"] == "usage");
}

TEST_CASE("runtime failures exit one with a runtime error payload") {
  TempDir dir("cli");
  const auto result = run_cli("sample --frames /no/such/frame/dir", dir.path());
  REQUIRE(result.exit_code == 1);
  const json err = last_stderr_json(result);
  REQUIRE(err["error"]["type"] == "runtime");
  REQUIRE(err["error"]["message"].get<std::string>().find("/no/such/frame/dir") !=
          std::string::npos);
}

TEST_CASE("config files fill defaults but never override flags") {
  TempDir dir("cli");
  write_flat_video(dir / "frames", 10, 16);
  std::ofstream(dir / "cfg.ini") << "# sampler settings\n"
                                 << "n = 3\n"
                                 << "sigma = 1.5\n"
                                 << "min_distance = 9\n"
                                 << "bogus_key = 7\n";
  const auto result = run_cli("--out " + (dir / "out").string() + " --config " +
                                  (dir / "cfg.ini").string() + " sample --frames " +
                                  (dir / "frames").string() + " --n 4",
                              dir.path());
  REQUIRE(result.exit_code == 0);
  const json doc = json::parse(read_file(dir / "out" / "plan.json"));
  REQUIRE(doc["indices"].size() == 4);                        // flag beats file
  REQUIRE(doc["config"]["sampler"]["sigma"] == 1.5);          // file beats default
  REQUIRE(doc["config"]["sampler"]["min_distance"] == 9);     // underscore key mapped
  REQUIRE(result.err.find("bogus_key") != std::string::npos); // unknown key warned
}

TEST_CASE("rerunning with the emitted config reproduces the plan byte for byte") {
  TempDir dir("cli");
  write_flat_video(dir / "frames", 10, 16);
  const auto first = run_cli("--out " + (dir / "a").string() + " sample --frames " +
                                 (dir / "frames").string() +
                                 " --n 4 --d 3 --sigma 1.5 --flow-presmooth 0.8",
                             dir.path());
  REQUIRE(first.exit_code == 0);

  // Transcribe the effective config embedded in the artifact into a
  // config file (flow keys carry the flow_ prefix on the command line).
  const json cfg = json::parse(read_file(dir / "a" / "plan.json"))["config"];
  std::ofstream out(dir / "replay.ini");
  for (const auto& [key, value] : cfg["sampler"].items()) out << key << " = " << value << "\n";
  out << "flow_window = " << cfg["flow"]["window_radius"] << "\n"
      << "flow_presmooth = " << cfg["flow"]["presmooth_sigma"] << "\n"
      << "flow_eps = " << cfg["flow"]["eps"] << "\n"
      << "flow_downscale = " << cfg["flow"]["downscale"] << "\n"
      << "jobs = " << cfg["jobs"] << "\n";
  out.close();

  const auto second = run_cli("--out " + (dir / "b").string() + " --config " +
                                  (dir / "replay.ini").string() + " sample --frames " +
                                  (dir / "frames").string(),
                              dir.path());
  REQUIRE(second.exit_code == 0);
  REQUIRE(read_file(dir / "a" / "plan.json") == read_file(dir / "b" / "plan.json"));
}

TEST_CASE("flowcurve writes the csv and svg pair") {
  TempDir dir("cli");
  write_flat_video(dir / "frames", 8, 16);
  const auto result = run_cli("--out " + (dir / "out").string() + " flowcurve --frames " +
                                  (dir / "frames").string(),
                              dir.path());
  REQUIRE(result.exit_code == 0);
  const std::string csv = read_file(dir / "out" / "curve.csv");
  REQUIRE(csv.rfind("# schema_version: 1", 0) == 0);
  REQUIRE(csv.find("index,raw,smoothed,is_peak,in_window") != std::string::npos);
  REQUIRE(read_file(dir / "out" / "curve.svg").rfind("<svg", 0) == 0);
  REQUIRE(result.out.find("curve points: 7") != std::string::npos);
}

TEST_CASE("tubes selects, reports, and emits optional artifacts") {
  TempDir dir("cli");
  Tensor tokens = Tensor::zeros({2, 16, 4});
  for (std::size_t i = 0; i < tokens.data.size(); ++i)
    tokens.data[i] = static_cast<float>((i * 37 % 101)) / 50.0f - 1.0f;
  stimusel::write_tensor(tokens, dir / "tokens.stvt");

  const std::string args = "--out " + (dir / "out").string() + " --seed 7 tubes --tokens " +
                           (dir / "tokens.stvt").string() +
                           " --tube 1,2,2 --topk 2 --emit-tokens --emit-heatmap";
  const auto result = run_cli(args, dir.path());
  REQUIRE(result.exit_code == 0);

  const json doc = json::parse(read_file(dir / "out" / "selection.json"));
  REQUIRE(doc["command"] == "tubes");
  REQUIRE(doc["tubes_total"] == 8);
  REQUIRE(doc["selected"].size() == 2);
  REQUIRE(doc["spatial_tokens"] == 8);

  const Tensor heat = stimusel::read_tensor(dir / "out" / "heatmap.stvt");
  REQUIRE(heat.dims == std::vector<std::uint64_t>({2, 4, 4}));
  const auto bundle = stimusel::read_bundle(dir / "out" / "tokens.stvb");
  REQUIRE(bundle.contains("spatial"));
  REQUIRE(bundle.get("spatial").dims == std::vector<std::uint64_t>({8, 4}));

  // Same seed, same bytes.
  const auto rerun = run_cli("--out " + (dir / "out2").string() + args.substr(args.find(" --seed")),
                             dir.path());
  REQUIRE(rerun.exit_code == 0);
  REQUIRE(read_file(dir / "out" / "selection.json") ==
          read_file(dir / "out2" / "selection.json"));
}

TEST_CASE("eval reports the quadrant fixture at one decimal") {
  TempDir dir("cli");
  const auto records = dir / "records.jsonl";
  std::ofstream(records)
      << R"({"item_id":"r1","label":"joy","predictions":["joy"],"reasoning":"they are happy","judge_ours":4,"judge_baseline":2})"
      << "\n"
      << R"({"item_id":"r2","label":"joy","predictions":["joy"],"reasoning":"everyone is terrified","judge_ours":2,"judge_baseline":2})"
      << "\n"
      << R"({"item_id":"r3","label":"joy","predictions":["fear"],"reasoning":"a delighted crowd"})"
      << "\n"
      << R"({"item_id":"r4","label":"joy","predictions":["fear"],"reasoning":"a gray wall"})"
      << "\n";

  const auto result = run_cli("--out " + (dir / "out").string() + " eval --records " +
                                  records.string() + " --taxonomy " +
                                  std::string(TAXONOMY_DIR) + "/ve8.json --topk 1,2",
                              dir.path());
  REQUIRE(result.exit_code == 0);
  REQUIRE(result.out.find("top-1: 50.0") != std::string::npos);
  REQUIRE(result.out.find("top-2: 50.0") != std::string::npos);
  REQUIRE(result.out.find("emo-align: 50.0") != std::string::npos);
  REQUIRE(result.out.find("doubly-right rr/rw/wr/ww: 25.0/25.0/25.0/25.0") != std::string::npos);

  const json doc = json::parse(read_file(dir / "out" / "report.json"));
  REQUIRE(doc["records_evaluated"] == 4);
  REQUIRE(doc["top_k"]["1"] == 50.0);
  REQUIRE(doc["emo_align"]["accuracy"] == 50.0);
  REQUIRE(doc["emo_align"]["unresolved"] == 1);
  REQUIRE(doc["doubly_right"]["rr"] == 25.0);
  REQUIRE(doc["doubly_right"]["ww"] == 25.0);
  REQUIRE(doc["judge"]["win"] == 1);
  REQUIRE(doc["judge"]["tie"] == 1);
  REQUIRE(doc["judge"]["pairs"] == 2);
  REQUIRE(doc["clip_s"].is_null());
}

TEST_CASE("eval folds in embedding similarity when a directory is given") {
  TempDir dir("cli");
  const auto records = dir / "records.jsonl";
  std::ofstream(records)
      << R"({"item_id":"a","label":"joy","predictions":["joy"],"reasoning":"happy"})" << "\n"
      << R"({"item_id":"b","label":"joy","predictions":["joy"],"reasoning":"happy"})" << "\n";

  std::filesystem::create_directories(dir / "emb");
  Tensor frames = Tensor::zeros({2, 3});
  frames.at2(0, 0) = 1.0f;
  frames.at2(1, 0) = 1.0f;
  Tensor text = Tensor::zeros({3});
  text.data[0] = 2.0f;
  stimusel::write_tensor(frames, dir / "emb" / "a.frames.stvt");
  stimusel::write_tensor(text, dir / "emb" / "a.text.stvt");

  const auto result = run_cli("--out " + (dir / "out").string() + " eval --records " +
                                  records.string() + " --taxonomy " +
                                  std::string(TAXONOMY_DIR) + "/ve8.json --emb-dir " +
                                  (dir / "emb").string(),
                              dir.path());
  REQUIRE(result.exit_code == 0);
  const json doc = json::parse(read_file(dir / "out" / "report.json"));
  REQUIRE(doc["clip_s"]["covered"] == 1);
  REQUIRE(doc["clip_s"]["missing"] == 1);
  REQUIRE(doc["clip_s"]["mean"].get<double>() == doctest::Approx(250.0).epsilon(1e-6));
}

TEST_CASE("instructgen replays fixtures deterministically and resumes") {
  TempDir dir("cli");
  const std::vector<std::string> video_ids = {"clip-a", "clip-b"};
  const std::vector<std::string> emotions = {"joy", "fear"};
  for (const auto& id : video_ids) write_flat_video(dir / id, 8, 16);

  const auto manifest = dir / "manifest.jsonl";
  {
    std::ofstream out(manifest);
    for (std::size_t i = 0; i < video_ids.size(); ++i) {
      out << json{{"video_id", video_ids[i]},
                  {"frames_dir", (dir / video_ids[i]).string()},
                  {"emotion", emotions[i]}}
                 .dump()
          << "\n";
    }
  }

  // Record fixtures against the exact prompts the pipeline sends: capture
  // the caption requests per frame, then derive summary and reasoning
  // requests from the captions.
  const auto fixtures = dir / "fixtures";
  for (std::size_t v = 0; v < video_ids.size(); ++v) {
    const auto video = stimusel::load_frame_sequence(dir / video_ids[v], stimusel::FrameMode::kGray);
    const auto indices = stimusel::uniform_indices(video.frame_count(), 3);

    CaptureClient capture;
    stimusel::ChatFrameCaptioner captioner(capture);
    stimusel::CaptionSet set;
    set.video_id = video_ids[v];
    for (std::size_t idx : indices) {
      captioner.caption(video_ids[v], idx, video.frames[idx]);
      const std::string text = "caption " + std::to_string(idx) + " of " + video_ids[v];
      stimusel::FixtureChatClient::record(fixtures, capture.calls.back(), text);
      set.frame_captions.emplace_back(idx, text);
    }

    CaptureClient summary_capture;
    stimusel::summarize_video(set, summary_capture);
    const std::string summary = "Summary of " + video_ids[v] + ".";
    stimusel::FixtureChatClient::record(fixtures, summary_capture.calls.back(), summary);

    stimusel::FixtureChatClient::record(
        fixtures, stimusel::build_reasoning_prompt(summary, emotions[v]),
        "Reason one. Reason two. Reason three.");
  }

  const auto out_jsonl = dir / "records.jsonl";
  const std::string args = "instructgen --videos " + manifest.string() + " --taxonomy " +
                           std::string(TAXONOMY_DIR) + "/ve8.json --fixtures " +
                           fixtures.string() + " --out " + out_jsonl.string() + " --n 3";

  const auto first = run_cli(args, dir.path());
  REQUIRE(first.exit_code == 0);
  REQUIRE(first.out.find("written: 2, skipped: 0, failed: 0") != std::string::npos);
  const std::string bytes = read_file(out_jsonl);

  const auto recs = stimusel::read_instruction_jsonl(out_jsonl);
  REQUIRE(recs.size() == 2);
  REQUIRE(recs[0].video_id == "clip-a");
  REQUIRE(recs[0].video_caption == "Summary of clip-a.");
  REQUIRE(recs[0].provenance.created_at == "1970-01-01T00:00:00Z");
  REQUIRE(recs[1].emotion == "fear");

  // Rerun: everything already recorded, nothing rewritten.
  const auto second = run_cli(args, dir.path());
  REQUIRE(second.exit_code == 0);
  REQUIRE(second.out.find("written: 0, skipped: 2, failed: 0") != std::string::npos);
  REQUIRE(read_file(out_jsonl) == bytes);

  // Fresh output directory reproduces the same bytes.
  const auto out2 = dir / "records2.jsonl";
  const auto third = run_cli("instructgen --videos " + manifest.string() + " --taxonomy " +
                                 std::string(TAXONOMY_DIR) + "/ve8.json --fixtures " +
                                 fixtures.string() + " --out " + out2.string() + " --n 3",
                             dir.path());
  REQUIRE(third.exit_code == 0);
  REQUIRE(read_file(out2) == bytes);
}

TEST_CASE("viz renders overlays for a plan") {
  TempDir dir("cli");
  write_flat_video(dir / "frames", 6, 16);
  REQUIRE(run_cli("--out " + (dir / "plan").string() + " sample --frames " +
                      (dir / "frames").string() + " --n 2",
                  dir.path())
              .exit_code == 0);

  Tensor heat = Tensor::zeros({2, 4, 4});
  for (std::size_t i = 0; i < heat.data.size(); ++i) heat.data[i] = static_cast<float>(i);
  stimusel::write_tensor(heat, dir / "heat.stvt");

  const auto result = run_cli("--out " + (dir / "viz").string() + " viz --frames " +
                                  (dir / "frames").string() + " --plan " +
                                  (dir / "plan" / "plan.json").string() + " --heatmap " +
                                  (dir / "heat.stvt").string(),
                              dir.path());
  REQUIRE(result.exit_code == 0);

  const json meta = json::parse(read_file(dir / "viz" / "overlay_meta.json"));
  REQUIRE(meta["files"].size() == 6);
  std::size_t on_disk = 0;
  for (const auto& entry : std::filesystem::directory_iterator(dir / "viz" / "overlays"))
    if (entry.path().extension() == ".png") ++on_disk;
  REQUIRE(on_disk == 6);
}
