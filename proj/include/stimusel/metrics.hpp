#pragma once

#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "stimusel/chat_client.hpp"
#include "stimusel/tensor.hpp"

namespace stimusel {

/// Trim, lowercase, strip punctuation; the comparison form for all
/// emotion labels.
std::string normalize_label(const std::string& raw);

/// Label set plus per-label synonym lexicon, loaded from JSON
/// {name, labels:[...], lexicon:{label:[synonyms]}}.
struct EmotionTaxonomy {
  std::string name;
  std::vector<std::string> labels;                         // normalized, order significant
  std::map<std::string, std::vector<std::string>> lexicon; // label -> normalized synonyms

  static EmotionTaxonomy from_json_file(const std::filesystem::path& path);

  bool contains(const std::string& normalized) const;
  void validate() const;
};

/// One test item: ground truth, ranked predictions, reasoning text, and
/// optional judge scores. JSONL field names: item_id, label, predictions,
/// reasoning, judge_ours, judge_baseline.
struct EvalRecord {
  std::string item_id;
  std::string label;
  std::vector<std::string> predictions;  // ranked, best first
  std::string reasoning;
  std::optional<int> judge_ours;
  std::optional<int> judge_baseline;
};

std::vector<EvalRecord> read_records_jsonl(const std::filesystem::path& path);

/// Percentage of records whose label appears in the first k predictions.
double top_k_accuracy(const std::vector<EvalRecord>& records, std::size_t k);

/// Maps reasoning text to a taxonomy emotion, or nullopt when the text
/// cannot be resolved to one.
class TextEmotionClassifier {
 public:
  virtual ~TextEmotionClassifier() = default;
  virtual std::optional<std::string> classify(const std::string& reasoning,
                                              const EmotionTaxonomy& taxonomy) = 0;
  virtual std::string id() const = 0;
};

/// Offline deterministic classifier: counts lexicon-synonym occurrences
/// (longest match wins at each position; the label itself is an implicit
/// synonym) and returns the label with the highest count, ties broken by
/// taxonomy label order. No match resolves to nullopt.
class LexiconClassifier final : public TextEmotionClassifier {
 public:
  std::optional<std::string> classify(const std::string& reasoning,
                                      const EmotionTaxonomy& taxonomy) override;
  std::string id() const override { return "lexicon"; }
};

/// Default prompt template for the remote classifier; "{labels}" and
/// "{text}" are substituted. A reconstruction, not a published prompt.
extern const char* const kClassifierPromptTemplate;

/// Chat-backed classifier. An answer outside the taxonomy resolves to
/// nullopt (the caller reports the record as unresolved).
class RemoteClassifier final : public TextEmotionClassifier {
 public:
  RemoteClassifier(ChatClient& client, std::string prompt_template = kClassifierPromptTemplate);

  std::optional<std::string> classify(const std::string& reasoning,
                                      const EmotionTaxonomy& taxonomy) override;
  std::string id() const override;

 private:
  ChatClient& client_;
  std::string template_;
};

struct EmoAlignOutcome {
  std::optional<std::string> predicted;  // nullopt: unresolved
  bool correct = false;
  bool resolved = false;
};

EmoAlignOutcome emo_align(const EvalRecord& record, TextEmotionClassifier& classifier,
                          const EmotionTaxonomy& taxonomy);

/// Joint prediction/reasoning correctness partition, in percent.
/// rr+rw+wr+ww == 100 within 1e-6.
struct DoublyRightReport {
  double rr = 0.0;
  double rw = 0.0;
  double wr = 0.0;
  double ww = 0.0;
};

struct RecordFlags {
  bool prediction_correct = false;  // top-1
  bool reasoning_correct = false;   // emo-align
};

DoublyRightReport doubly_right(const std::vector<RecordFlags>& flags);

/// 2.5 * max(cos(video, text), 0) where the video embedding is the
/// renormalized mean of L2-normalized frame embeddings. `frames` is
/// [F, D], `text` is [D]. The CLI reports this value x100.
double clip_score(const Tensor& frame_embeddings, const Tensor& text_embedding);

struct JudgeSummary {
  std::size_t win = 0;
  std::size_t lose = 0;
  std::size_t tie = 0;
  double avg_ours = 0.0;
};

/// Pairwise (ours, baseline) scores, each an integer in [1, 4].
JudgeSummary judge_aggregate(const std::vector<std::pair<int, int>>& pairwise);

}  // namespace stimusel
