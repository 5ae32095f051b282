#include "stimusel/metrics.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <fstream>
#include <sstream>

#include <nlohmann/json.hpp>

#include "stimusel/error.hpp"

namespace stimusel {
namespace {

using json = nlohmann::json;

bool is_strippable(unsigned char c) { return std::ispunct(c) != 0; }

// Tokens are maximal runs of alphanumerics; everything else separates.
std::vector<std::string> tokenize(const std::string& text) {
  std::vector<std::string> out;
  std::string cur;
  for (unsigned char c : text) {
    if (std::isalnum(c)) {
      cur.push_back(static_cast<char>(std::tolower(c)));
    } else if (!cur.empty()) {
      out.push_back(cur);
      cur.clear();
    }
  }
  if (!cur.empty()) out.push_back(cur);
  return out;
}

}  // namespace

std::string normalize_label(const std::string& raw) {
  std::size_t begin = 0;
  std::size_t end = raw.size();
  while (begin < end && std::isspace(static_cast<unsigned char>(raw[begin]))) ++begin;
  while (end > begin && std::isspace(static_cast<unsigned char>(raw[end - 1]))) --end;
  std::string out;
  out.reserve(end - begin);
  for (std::size_t i = begin; i < end; ++i) {
    unsigned char c = static_cast<unsigned char>(raw[i]);
    if (is_strippable(c)) continue;
    out.push_back(static_cast<char>(std::tolower(c)));
  }
  // Collapse whitespace runs to single spaces so "empathic  pain" and
  // "empathic pain" normalize identically.
  std::string collapsed;
  collapsed.reserve(out.size());
  bool in_space = false;
  for (char c : out) {
    if (std::isspace(static_cast<unsigned char>(c))) {
      in_space = true;
      continue;
    }
    if (in_space && !collapsed.empty()) collapsed.push_back(' ');
    in_space = false;
    collapsed.push_back(c);
  }
  return collapsed;
}

EmotionTaxonomy EmotionTaxonomy::from_json_file(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error("cannot open taxonomy file: " + path.string());
  json doc;
  try {
    doc = json::parse(in);
  } catch (const json::exception& e) {
    throw Error("taxonomy " + path.string() + " is not valid JSON: " + e.what());
  }
  if (!doc.is_object() || !doc.contains("name") || !doc.contains("labels"))
    throw Error("taxonomy " + path.string() + " must be an object with name and labels");

  EmotionTaxonomy tax;
  tax.name = doc["name"].get<std::string>();
  for (const auto& l : doc["labels"]) {
    tax.labels.push_back(normalize_label(l.get<std::string>()));
  }
  if (doc.contains("lexicon")) {
    for (const auto& [label, syns] : doc["lexicon"].items()) {
      std::vector<std::string> normalized;
      for (const auto& s : syns) normalized.push_back(normalize_label(s.get<std::string>()));
      tax.lexicon[normalize_label(label)] = std::move(normalized);
    }
  }
  tax.validate();
  return tax;
}

bool EmotionTaxonomy::contains(const std::string& normalized) const {
  return std::find(labels.begin(), labels.end(), normalized) != labels.end();
}

void EmotionTaxonomy::validate() const {
  if (labels.empty()) throw Error("taxonomy " + name + " has no labels");
  for (std::size_t i = 0; i < labels.size(); ++i) {
    if (labels[i].empty()) throw Error("taxonomy " + name + " has an empty label");
    for (std::size_t j = i + 1; j < labels.size(); ++j) {
      if (labels[i] == labels[j])
        throw Error("taxonomy " + name + " has duplicate label: " + labels[i]);
    }
  }
  for (const auto& [label, _] : lexicon) {
    if (!contains(label))
      throw Error("taxonomy " + name + " lexicon references unknown label: " + label);
  }
}

std::vector<EvalRecord> read_records_jsonl(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error("cannot open records file: " + path.string());
  std::vector<EvalRecord> records;
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
    if (!doc.is_object())
      throw Error(path.string() + ":" + std::to_string(lineno) + ": record must be an object");
    for (const char* field : {"item_id", "label", "predictions"}) {
      if (!doc.contains(field))
        throw Error(path.string() + ":" + std::to_string(lineno) + ": missing field " + field);
    }
    EvalRecord rec;
    rec.item_id = doc["item_id"].get<std::string>();
    rec.label = doc["label"].get<std::string>();
    if (!doc["predictions"].is_array())
      throw Error(path.string() + ":" + std::to_string(lineno) + ": predictions must be an array");
    for (const auto& p : doc["predictions"]) rec.predictions.push_back(p.get<std::string>());
    if (doc.contains("reasoning") && !doc["reasoning"].is_null())
      rec.reasoning = doc["reasoning"].get<std::string>();
    if (doc.contains("judge_ours") && !doc["judge_ours"].is_null())
      rec.judge_ours = doc["judge_ours"].get<int>();
    if (doc.contains("judge_baseline") && !doc["judge_baseline"].is_null())
      rec.judge_baseline = doc["judge_baseline"].get<int>();
    records.push_back(std::move(rec));
  }
  if (records.empty()) throw Error("records file is empty: " + path.string());
  return records;
}

double top_k_accuracy(const std::vector<EvalRecord>& records, std::size_t k) {
  if (records.empty()) throw Error("top_k_accuracy: no records");
  if (k == 0) throw Error("top_k_accuracy: k must be positive");
  std::size_t hits = 0;
  for (const auto& rec : records) {
    const std::string truth = normalize_label(rec.label);
    const std::size_t limit = std::min(k, rec.predictions.size());
    for (std::size_t i = 0; i < limit; ++i) {
      if (normalize_label(rec.predictions[i]) == truth) {
        ++hits;
        break;
      }
    }
  }
  return 100.0 * static_cast<double>(hits) / static_cast<double>(records.size());
}

std::optional<std::string> LexiconClassifier::classify(const std::string& reasoning,
                                                       const EmotionTaxonomy& taxonomy) {
  const std::vector<std::string> tokens = tokenize(reasoning);

  // Synonym phrases as token sequences, each mapped to its label. The
  // label itself always counts as a synonym.
  struct Entry {
    std::vector<std::string> phrase;
    std::size_t label_index;
  };
  std::vector<Entry> entries;
  for (std::size_t li = 0; li < taxonomy.labels.size(); ++li) {
    const std::string& label = taxonomy.labels[li];
    entries.push_back({tokenize(label), li});
    auto it = taxonomy.lexicon.find(label);
    if (it != taxonomy.lexicon.end()) {
      for (const auto& syn : it->second) entries.push_back({tokenize(syn), li});
    }
  }

  std::vector<std::size_t> counts(taxonomy.labels.size(), 0);
  std::size_t pos = 0;
  while (pos < tokens.size()) {
    // Longest phrase starting at pos wins; earlier taxonomy label breaks
    // equal-length ties.
    std::size_t best_len = 0;
    std::size_t best_label = 0;
    for (const auto& entry : entries) {
      if (entry.phrase.empty() || entry.phrase.size() > tokens.size() - pos) continue;
      if (entry.phrase.size() <= best_len) continue;
      bool match = true;
      for (std::size_t i = 0; i < entry.phrase.size(); ++i) {
        if (tokens[pos + i] != entry.phrase[i]) {
          match = false;
          break;
        }
      }
      if (match) {
        best_len = entry.phrase.size();
        best_label = entry.label_index;
      }
    }
    if (best_len > 0) {
      ++counts[best_label];
      pos += best_len;
    } else {
      ++pos;
    }
  }

  std::size_t best = 0;
  std::size_t best_count = 0;
  for (std::size_t i = 0; i < counts.size(); ++i) {
    if (counts[i] > best_count) {
      best_count = counts[i];
      best = i;
    }
  }
  if (best_count == 0) return std::nullopt;
  return taxonomy.labels[best];
}

const char* const kClassifierPromptTemplate =
    "Decide which one emotion from this list best matches the passage: {labels}.\n"
    "Reply with exactly one emotion from the list and nothing else.\n\n"
    "Passage: {text}";

namespace {

std::string substitute(const std::string& tmpl, const std::string& key, const std::string& value) {
  std::string out = tmpl;
  std::size_t pos = 0;
  while ((pos = out.find(key, pos)) != std::string::npos) {
    out.replace(pos, key.size(), value);
    pos += value.size();
  }
  return out;
}

}  // namespace

RemoteClassifier::RemoteClassifier(ChatClient& client, std::string prompt_template)
    : client_(client), template_(std::move(prompt_template)) {}

std::optional<std::string> RemoteClassifier::classify(const std::string& reasoning,
                                                      const EmotionTaxonomy& taxonomy) {
  std::string labels;
  for (std::size_t i = 0; i < taxonomy.labels.size(); ++i) {
    if (i) labels += ", ";
    labels += taxonomy.labels[i];
  }
  std::string prompt = substitute(template_, "{labels}", labels);
  prompt = substitute(prompt, "{text}", reasoning);

  const std::string answer = client_.complete({{"user", prompt}});
  const std::string normalized = normalize_label(answer);
  if (taxonomy.contains(normalized)) return normalized;
  // A verbose reply that still names exactly one label counts.
  std::optional<std::string> found;
  for (const auto& label : taxonomy.labels) {
    if (normalized.find(label) != std::string::npos) {
      if (found) return std::nullopt;
      found = label;
    }
  }
  return found;
}

std::string RemoteClassifier::id() const { return "remote:" + client_.id(); }

EmoAlignOutcome emo_align(const EvalRecord& record, TextEmotionClassifier& classifier,
                          const EmotionTaxonomy& taxonomy) {
  EmoAlignOutcome out;
  out.predicted = classifier.classify(record.reasoning, taxonomy);
  out.resolved = out.predicted.has_value();
  out.correct = out.resolved && *out.predicted == normalize_label(record.label);
  return out;
}

DoublyRightReport doubly_right(const std::vector<RecordFlags>& flags) {
  if (flags.empty()) throw Error("doubly_right: no records");
  std::size_t rr = 0, rw = 0, wr = 0, ww = 0;
  for (const auto& f : flags) {
    if (f.prediction_correct && f.reasoning_correct) ++rr;
    else if (f.prediction_correct) ++rw;
    else if (f.reasoning_correct) ++wr;
    else ++ww;
  }
  const double n = static_cast<double>(flags.size());
  return {100.0 * rr / n, 100.0 * rw / n, 100.0 * wr / n, 100.0 * ww / n};
}

double clip_score(const Tensor& frame_embeddings, const Tensor& text_embedding) {
  if (frame_embeddings.dims.size() != 2)
    throw Error("clip_score: frame embeddings must be [frames, dim]");
  if (text_embedding.dims.size() != 1)
    throw Error("clip_score: text embedding must be [dim]");
  const std::size_t frames = static_cast<std::size_t>(frame_embeddings.dims[0]);
  const std::size_t dim = static_cast<std::size_t>(frame_embeddings.dims[1]);
  if (frames == 0) throw Error("clip_score: no frame embeddings");
  if (dim != static_cast<std::size_t>(text_embedding.dims[0]))
    throw Error("clip_score: dimension mismatch between frames and text");

  // Mean of L2-normalized frame embeddings, then renormalize the mean.
  std::vector<double> mean(dim, 0.0);
  for (std::size_t f = 0; f < frames; ++f) {
    double norm_sq = 0.0;
    for (std::size_t d = 0; d < dim; ++d) {
      const double v = frame_embeddings.data[f * dim + d];
      norm_sq += v * v;
    }
    const double norm = std::sqrt(norm_sq);
    if (norm == 0.0) throw Error("clip_score: zero-norm frame embedding");
    for (std::size_t d = 0; d < dim; ++d) {
      mean[d] += frame_embeddings.data[f * dim + d] / norm;
    }
  }
  double mean_norm_sq = 0.0;
  for (std::size_t d = 0; d < dim; ++d) {
    mean[d] /= static_cast<double>(frames);
    mean_norm_sq += mean[d] * mean[d];
  }
  const double mean_norm = std::sqrt(mean_norm_sq);
  if (mean_norm == 0.0) throw Error("clip_score: frame embeddings cancel to zero");

  double text_norm_sq = 0.0;
  for (std::size_t d = 0; d < dim; ++d) {
    const double v = text_embedding.data[d];
    text_norm_sq += v * v;
  }
  const double text_norm = std::sqrt(text_norm_sq);
  if (text_norm == 0.0) throw Error("clip_score: zero-norm text embedding");

  double dot = 0.0;
  for (std::size_t d = 0; d < dim; ++d) dot += mean[d] / mean_norm * text_embedding.data[d] / text_norm;
  return 2.5 * std::max(dot, 0.0);
}

JudgeSummary judge_aggregate(const std::vector<std::pair<int, int>>& pairwise) {
  if (pairwise.empty()) throw Error("judge_aggregate: no score pairs");
  JudgeSummary out;
  double sum_ours = 0.0;
  for (const auto& [ours, baseline] : pairwise) {
    if (ours < 1 || ours > 4 || baseline < 1 || baseline > 4)
      throw Error("judge_aggregate: scores must be integers in [1, 4]");
    if (ours > baseline) ++out.win;
    else if (ours < baseline) ++out.lose;
    else ++out.tie;
    sum_ours += ours;
  }
  out.avg_ours = sum_ours / static_cast<double>(pairwise.size());
  return out;
}

}  // namespace stimusel
