#pragma once

#include <cstddef>
#include <filesystem>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <utility>
#include <vector>

#include "stimusel/chat_client.hpp"
#include "stimusel/event_sampler.hpp"
#include "stimusel/frames.hpp"
#include "stimusel/metrics.hpp"
#include "stimusel/optical_flow.hpp"

namespace stimusel {

/// Captions for the sampled frames of one video, keyed by source frame
/// index but numbered positionally when formatted.
struct CaptionSet {
  std::string video_id;
  std::vector<std::pair<std::size_t, std::string>> frame_captions;  // (source index, text)
  std::optional<std::string> video_caption;

  void validate() const;  // indices strictly increasing, texts nonempty
};

/// "Frame 1 description: <c1>; Frame 2 description: <c2>; ..." with
/// positional 1-based numbering over the sampled order. Caption texts
/// containing the "; " delimiter have it replaced with ", " so the
/// joined string parses unambiguously.
std::string format_frame_captions(const CaptionSet& set);

/// Default summarization prompt; "{captions}" is substituted with the
/// formatted frame captions. The wording is this toolkit's own default,
/// overridable via config.
extern const char* const kSummarizePromptTemplate;

/// Asks the client for a video-level caption of the formatted frame
/// captions. Returns the summary; errors on an empty response.
std::string summarize_video(const CaptionSet& set, ChatClient& client,
                            const std::string& prompt_template = kSummarizePromptTemplate);

/// Two-message prompt asking for the reasoning that derives the emotion
/// from the caption. Byte-deterministic; golden-file tested.
std::vector<ChatMessage> build_reasoning_prompt(const std::string& video_caption,
                                                const std::string& emotion);

struct Provenance {
  std::string captioner;
  std::string summarizer;
  std::string reasoner;
  std::vector<std::size_t> frame_indices;  // source indices of captioned frames
  std::string created_at;                  // ISO 8601 UTC
};

struct InstructionRecord {
  std::string video_id;
  std::string emotion;
  std::string reasoning;
  std::string video_caption;
  Provenance provenance;
};

std::string record_to_jsonl(const InstructionRecord& rec);
std::vector<InstructionRecord> read_instruction_jsonl(const std::filesystem::path& path);

/// STIMUSEL_TIMESTAMP env value when set, otherwise the current UTC time.
std::string provenance_timestamp();

/// Summarize, build the reasoning prompt, query the reasoner, assemble
/// the record. The emotion is validated against the taxonomy before any
/// client call.
InstructionRecord generate_record(const CaptionSet& set, const std::string& emotion,
                                  const EmotionTaxonomy& taxonomy, ChatClient& summarizer,
                                  ChatClient& reasoner, const std::string& captioner_id,
                                  const std::string& summarize_template = kSummarizePromptTemplate,
                                  const std::string& created_at = provenance_timestamp());

/// Per-frame caption source.
class FrameCaptioner {
 public:
  virtual ~FrameCaptioner() = default;
  virtual std::string caption(const std::string& video_id, std::size_t frame_index,
                              const Frame& frame) = 0;
  virtual std::string id() const = 0;
};

/// Captioner backed by a chat client. The request names the video, the
/// frame index, and a digest of the frame's gray pixels, so replay
/// fixtures key on actual frame content. A text-only backend cannot see
/// the pixels; this adapter exists for fixture replay and for services
/// that resolve frames out of band.
class ChatFrameCaptioner final : public FrameCaptioner {
 public:
  explicit ChatFrameCaptioner(ChatClient& client);

  std::string caption(const std::string& video_id, std::size_t frame_index,
                      const Frame& frame) override;
  std::string id() const override;

 private:
  ChatClient& client_;
};

/// Crash-resumable progress: completed video ids plus the last error per
/// failed id. Saved atomically (temp file + rename).
struct Checkpoint {
  std::set<std::string> completed;
  std::map<std::string, std::string> failed;

  static Checkpoint load(const std::filesystem::path& path);  // missing file -> empty
  void save(const std::filesystem::path& path) const;
};

struct ManifestEntry {
  std::string video_id;
  std::filesystem::path frames_dir;
  std::string emotion;
};

/// JSONL of {video_id, frames_dir, emotion}.
std::vector<ManifestEntry> read_manifest(const std::filesystem::path& path);

struct BatchClients {
  FrameCaptioner* captioner = nullptr;
  ChatClient* summarizer = nullptr;
  ChatClient* reasoner = nullptr;
};

struct BatchOptions {
  SamplerConfig sampler;
  FlowParams flow;
  std::string summarize_template = kSummarizePromptTemplate;
  int jobs = 1;
  std::string created_at;  // empty -> provenance_timestamp() once per batch
};

struct BatchResult {
  std::size_t written = 0;
  std::size_t skipped = 0;   // already completed per checkpoint or existing output
  std::size_t failed = 0;
};

/// Samples each video's frames, captions the sampled frames, and appends
/// one record per video to `out_jsonl`. Workers run per video; appends
/// happen in manifest order regardless of completion order, and the
/// checkpoint is rewritten after every append. A failing video is logged
/// in the checkpoint and does not stop the batch. Rerunning skips ids
/// already present in the checkpoint or the output file.
BatchResult run_batch(const std::vector<ManifestEntry>& manifest, const BatchClients& clients,
                      const EmotionTaxonomy& taxonomy, const std::filesystem::path& out_jsonl,
                      const std::filesystem::path& checkpoint_path, const BatchOptions& options);

}  // namespace stimusel
