#include "stimusel/instructgen.hpp"

#include <atomic>
#include <condition_variable>
#include <cstdint>
#include <cstdio>
#include <cstdlib>
#include <ctime>
#include <fstream>
#include <mutex>
#include <sstream>
#include <thread>

#include <nlohmann/json.hpp>

#include "stimusel/error.hpp"

namespace stimusel {
namespace {

using ordered_json = nlohmann::ordered_json;
using json = nlohmann::json;

std::uint64_t fnv1a64(const std::uint8_t* data, std::size_t size) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (std::size_t i = 0; i < size; ++i) {
    h ^= data[i];
    h *= 0x100000001b3ULL;
  }
  return h;
}

std::string hex16(std::uint64_t v) {
  char buf[17];
  std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(v));
  return buf;
}

}  // namespace

void CaptionSet::validate() const {
  if (video_id.empty()) throw Error("caption set has no video_id");
  if (frame_captions.empty()) throw Error("caption set for " + video_id + " is empty");
  for (std::size_t i = 0; i < frame_captions.size(); ++i) {
    if (frame_captions[i].second.empty())
      throw Error("caption set for " + video_id + " has an empty caption at position " +
                  std::to_string(i));
    if (i > 0 && frame_captions[i].first <= frame_captions[i - 1].first)
      throw Error("caption set for " + video_id + " has non-increasing frame indices");
  }
  if (video_caption && video_caption->empty())
    throw Error("caption set for " + video_id + " has an empty video caption");
}

std::string format_frame_captions(const CaptionSet& set) {
  set.validate();
  std::string out;
  for (std::size_t i = 0; i < set.frame_captions.size(); ++i) {
    std::string text = set.frame_captions[i].second;
    std::size_t pos = 0;
    while ((pos = text.find("; ", pos)) != std::string::npos) {
      text.replace(pos, 2, ", ");
      pos += 2;
    }
    if (i) out += "; ";
    out += "Frame " + std::to_string(i + 1) + " description: " + text;
  }
  return out;
}

const char* const kSummarizePromptTemplate =
    "Summarize the following frame descriptions into one video-level caption. "
    "Keep the order of events and the temporal relations between frames, and do not "
    "invent details that no frame supports.\n\n{captions}";

std::string summarize_video(const CaptionSet& set, ChatClient& client,
                            const std::string& prompt_template) {
  const std::string formatted = format_frame_captions(set);
  std::string prompt = prompt_template;
  const std::string key = "{captions}";
  std::size_t pos = prompt.find(key);
  if (pos == std::string::npos)
    throw Error("summarization template is missing the {captions} placeholder");
  while (pos != std::string::npos) {
    prompt.replace(pos, key.size(), formatted);
    pos = prompt.find(key, pos + formatted.size());
  }
  const std::string summary = client.complete({{"user", prompt}});
  if (summary.empty()) throw Error("summarizer returned an empty caption for " + set.video_id);
  return summary;
}

std::vector<ChatMessage> build_reasoning_prompt(const std::string& video_caption,
                                                const std::string& emotion) {
  if (video_caption.empty()) throw Error("build_reasoning_prompt: empty video caption");
  if (emotion.empty()) throw Error("build_reasoning_prompt: empty emotion");
  std::vector<ChatMessage> messages;
  messages.push_back(
      {"system",
       "Given the below (QUESTION, ANSWER) pair examples of emotion estimation, left fill-in "
       "the REASONING process which derives ANSWERS from QUESTIONS in three sentences."});
  messages.push_back(
      {"user",
       "QUESTION: These are frame descriptions from a video. After reading the descriptions, "
       "how people might emotionally feel about the content and why. Only provide the one most "
       "likely emotion. " +
           video_caption + "\nANSWER: The viewer feels " + emotion +
           ".\nREASONING: Let's think of step-by-step"});
  return messages;
}

std::string record_to_jsonl(const InstructionRecord& rec) {
  ordered_json doc;
  doc["video_id"] = rec.video_id;
  doc["emotion"] = rec.emotion;
  doc["reasoning"] = rec.reasoning;
  doc["video_caption"] = rec.video_caption;
  ordered_json prov;
  prov["captioner"] = rec.provenance.captioner;
  prov["summarizer"] = rec.provenance.summarizer;
  prov["reasoner"] = rec.provenance.reasoner;
  prov["frame_indices"] = rec.provenance.frame_indices;
  prov["created_at"] = rec.provenance.created_at;
  doc["provenance"] = prov;
  return doc.dump();
}

std::vector<InstructionRecord> read_instruction_jsonl(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error("cannot open instruction file: " + path.string());
  std::vector<InstructionRecord> records;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    json doc;
    try {
      doc = json::parse(line);
    } catch (const json::exception& e) {
      throw Error(path.string() + ":" + std::to_string(lineno) + ": invalid JSON: " + e.what());
    }
    InstructionRecord rec;
    rec.video_id = doc.at("video_id").get<std::string>();
    rec.emotion = doc.at("emotion").get<std::string>();
    rec.reasoning = doc.at("reasoning").get<std::string>();
    rec.video_caption = doc.at("video_caption").get<std::string>();
    const json& prov = doc.at("provenance");
    rec.provenance.captioner = prov.at("captioner").get<std::string>();
    rec.provenance.summarizer = prov.at("summarizer").get<std::string>();
    rec.provenance.reasoner = prov.at("reasoner").get<std::string>();
    for (const auto& idx : prov.at("frame_indices"))
      rec.provenance.frame_indices.push_back(idx.get<std::size_t>());
    rec.provenance.created_at = prov.at("created_at").get<std::string>();
    records.push_back(std::move(rec));
  }
  return records;
}

std::string provenance_timestamp() {
  if (const char* pinned = std::getenv("STIMUSEL_TIMESTAMP")) return pinned;
  const std::time_t now = std::time(nullptr);
  std::tm tm{};
  gmtime_r(&now, &tm);
  char buf[32];
  std::strftime(buf, sizeof(buf), "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

InstructionRecord generate_record(const CaptionSet& set, const std::string& emotion,
                                  const EmotionTaxonomy& taxonomy, ChatClient& summarizer,
                                  ChatClient& reasoner, const std::string& captioner_id,
                                  const std::string& summarize_template,
                                  const std::string& created_at) {
  set.validate();
  const std::string normalized = normalize_label(emotion);
  if (!taxonomy.contains(normalized))
    throw Error("emotion '" + emotion + "' is not in taxonomy " + taxonomy.name);

  const std::string video_caption = summarize_video(set, summarizer, summarize_template);
  const std::vector<ChatMessage> prompt = build_reasoning_prompt(video_caption, normalized);
  const std::string reasoning = reasoner.complete(prompt);
  if (reasoning.empty()) throw Error("reasoner returned empty output for " + set.video_id);

  InstructionRecord rec;
  rec.video_id = set.video_id;
  rec.emotion = normalized;
  rec.reasoning = reasoning;
  rec.video_caption = video_caption;
  rec.provenance.captioner = captioner_id;
  rec.provenance.summarizer = summarizer.id();
  rec.provenance.reasoner = reasoner.id();
  for (const auto& [idx, _] : set.frame_captions) rec.provenance.frame_indices.push_back(idx);
  rec.provenance.created_at = created_at;
  return rec;
}

ChatFrameCaptioner::ChatFrameCaptioner(ChatClient& client) : client_(client) {}

std::string ChatFrameCaptioner::caption(const std::string& video_id, std::size_t frame_index,
                                        const Frame& frame) {
  const std::string digest = hex16(fnv1a64(frame.gray.data(), frame.gray.size()));
  const std::string prompt = "Describe frame " + std::to_string(frame_index) + " of video " +
                             video_id + " in one sentence. [frame digest " + digest + "]";
  const std::string caption = client_.complete({{"user", prompt}});
  if (caption.empty())
    throw Error("captioner returned empty output for " + video_id + " frame " +
                std::to_string(frame_index));
  return caption;
}

std::string ChatFrameCaptioner::id() const { return "chat-captioner:" + client_.id(); }

Checkpoint Checkpoint::load(const std::filesystem::path& path) {
  Checkpoint cp;
  std::ifstream in(path);
  if (!in) return cp;
  json doc;
  try {
    doc = json::parse(in);
  } catch (const json::exception& e) {
    throw Error("checkpoint " + path.string() + " is not valid JSON: " + e.what());
  }
  if (doc.contains("completed"))
    for (const auto& id : doc["completed"]) cp.completed.insert(id.get<std::string>());
  if (doc.contains("failed"))
    for (const auto& [id, msg] : doc["failed"].items()) cp.failed[id] = msg.get<std::string>();
  return cp;
}

void Checkpoint::save(const std::filesystem::path& path) const {
  ordered_json doc;
  doc["completed"] = completed;  // std::set serializes sorted
  ordered_json failed_doc = ordered_json::object();
  for (const auto& [id, msg] : failed) failed_doc[id] = msg;
  doc["failed"] = failed_doc;

  const std::filesystem::path tmp = path.string() + ".tmp";
  {
    std::ofstream out(tmp, std::ios::trunc);
    if (!out) throw Error("cannot write checkpoint temp file: " + tmp.string());
    out << doc.dump(2) << "\n";
    if (!out.good()) throw Error("short write to checkpoint temp file: " + tmp.string());
  }
  std::filesystem::rename(tmp, path);
}

std::vector<ManifestEntry> read_manifest(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error("cannot open manifest: " + path.string());
  std::vector<ManifestEntry> entries;
  std::set<std::string> seen;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    json doc;
    try {
      doc = json::parse(line);
    } catch (const json::exception& e) {
      throw Error(path.string() + ":" + std::to_string(lineno) + ": invalid JSON: " + e.what());
    }
    ManifestEntry entry;
    entry.video_id = doc.at("video_id").get<std::string>();
    entry.frames_dir = doc.at("frames_dir").get<std::string>();
    entry.emotion = doc.at("emotion").get<std::string>();
    if (entry.video_id.empty())
      throw Error(path.string() + ":" + std::to_string(lineno) + ": empty video_id");
    if (!seen.insert(entry.video_id).second)
      throw Error(path.string() + ": duplicate video_id " + entry.video_id);
    entries.push_back(std::move(entry));
  }
  if (entries.empty()) throw Error("manifest is empty: " + path.string());
  return entries;
}

namespace {

struct VideoOutcome {
  bool done = false;
  bool ok = false;
  InstructionRecord record;
  std::string error;
};

VideoOutcome process_video(const ManifestEntry& entry, const BatchClients& clients,
                           const EmotionTaxonomy& taxonomy, const BatchOptions& options,
                           const std::string& created_at) {
  VideoOutcome out;
  try {
    const VideoFrames video = load_frame_sequence(entry.frames_dir, FrameMode::kGray);
    const SamplingPlan plan = sample_frames(video, options.sampler, options.flow);
    CaptionSet set;
    set.video_id = entry.video_id;
    for (std::size_t idx : plan.indices) {
      set.frame_captions.emplace_back(
          idx, clients.captioner->caption(entry.video_id, idx, video.frames[idx]));
    }
    out.record = generate_record(set, entry.emotion, taxonomy, *clients.summarizer,
                                 *clients.reasoner, clients.captioner->id(),
                                 options.summarize_template, created_at);
    out.ok = true;
  } catch (const std::exception& e) {
    out.error = e.what();
  }
  out.done = true;
  return out;
}

}  // namespace

BatchResult run_batch(const std::vector<ManifestEntry>& manifest, const BatchClients& clients,
                      const EmotionTaxonomy& taxonomy, const std::filesystem::path& out_jsonl,
                      const std::filesystem::path& checkpoint_path, const BatchOptions& options) {
  if (!clients.captioner || !clients.summarizer || !clients.reasoner)
    throw Error("run_batch: captioner, summarizer, and reasoner clients are all required");
  if (options.jobs < 1) throw Error("run_batch: jobs must be >= 1");

  Checkpoint checkpoint = Checkpoint::load(checkpoint_path);
  // The output file is the source of truth for completion; a stale or
  // lost checkpoint must not cause duplicate lines.
  if (std::filesystem::exists(out_jsonl)) {
    for (const auto& rec : read_instruction_jsonl(out_jsonl)) checkpoint.completed.insert(rec.video_id);
  }

  std::vector<const ManifestEntry*> pending;
  BatchResult result;
  for (const auto& entry : manifest) {
    if (checkpoint.completed.count(entry.video_id)) {
      ++result.skipped;
    } else {
      checkpoint.failed.erase(entry.video_id);  // retrying
      pending.push_back(&entry);
    }
  }
  checkpoint.save(checkpoint_path);
  if (pending.empty()) return result;

  const std::string created_at =
      options.created_at.empty() ? provenance_timestamp() : options.created_at;

  std::ofstream out(out_jsonl, std::ios::app);
  if (!out) throw Error("cannot open output file: " + out_jsonl.string());

  std::vector<VideoOutcome> outcomes(pending.size());
  std::mutex mu;
  std::condition_variable cv;
  std::atomic<std::size_t> next_index{0};

  const std::size_t workers =
      std::min<std::size_t>(static_cast<std::size_t>(options.jobs), pending.size());
  std::vector<std::thread> pool;
  pool.reserve(workers);
  for (std::size_t w = 0; w < workers; ++w) {
    pool.emplace_back([&] {
      while (true) {
        const std::size_t i = next_index.fetch_add(1);
        if (i >= pending.size()) return;
        VideoOutcome outcome =
            process_video(*pending[i], clients, taxonomy, options, created_at);
        {
          std::lock_guard<std::mutex> lock(mu);
          outcomes[i] = std::move(outcome);
        }
        cv.notify_all();
      }
    });
  }

  // Flush in manifest order so the output is byte-stable regardless of
  // worker scheduling.
  {
    std::unique_lock<std::mutex> lock(mu);
    for (std::size_t i = 0; i < pending.size(); ++i) {
      cv.wait(lock, [&] { return outcomes[i].done; });
      if (outcomes[i].ok) {
        out << record_to_jsonl(outcomes[i].record) << "\n";
        out.flush();
        if (!out.good()) throw Error("short write to output file: " + out_jsonl.string());
        checkpoint.completed.insert(pending[i]->video_id);
        ++result.written;
      } else {
        checkpoint.failed[pending[i]->video_id] = outcomes[i].error;
        ++result.failed;
      }
      checkpoint.save(checkpoint_path);
    }
  }

  for (auto& t : pool) t.join();
  return result;
}

}  // namespace stimusel
