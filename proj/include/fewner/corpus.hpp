#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json_fwd.hpp>

#include "fewner/tagging.hpp"

namespace fewner::corpus {

struct Token {
  std::string text;       // lowercased
  std::size_t start = 0;  // byte offsets into the original string
  std::size_t end = 0;    // exclusive

  bool operator==(const Token&) const = default;
};

// Lowercases, splits on whitespace, and breaks punctuation into single-char
// tokens. Bytes >= 0x80 count as word characters so UTF-8 stays intact.
std::vector<Token> tokenize(const std::string& text);

// Raw markup in which entity mentions are wrapped as [[anchor text]] or
// [[target|shown text]]. Markers must be balanced and non-nested.
struct MarkupDocument {
  std::string doc_id;
  std::string text;
};

struct LabeledSentence {
  std::vector<std::string> tokens;
  std::optional<std::vector<tagging::Tag>> tags;  // span-only corpora
  std::optional<std::vector<tagging::Span>> spans;  // typed corpora

  bool operator==(const LabeledSentence&) const = default;
};

// Stored tags, or tags re-encoded from the span list.
std::vector<tagging::Tag> bioes_tags(const LabeledSentence& s);

struct Dataset {
  std::vector<LabeledSentence> sentences;
  std::vector<std::string> class_inventory;  // sorted, never contains "O"

  bool operator==(const Dataset&) const = default;
};

struct AnnotationResult {
  std::vector<LabeledSentence> sentences;
  int discarded = 0;  // sentences containing no entity span
};

// Splits on [.?!] outside markers, strips [[ ]], maps each anchor to a token
// span and encodes BIOES tags. Sentences without spans are discarded and
// counted. Throws std::invalid_argument naming the byte offset for unbalanced
// or nested markers.
AnnotationResult annotate_hyperlinks(const MarkupDocument& doc);

// Deterministic toy corpus: every class owns a disjoint marker vocabulary
// drawn from a shared entity token pool, each sentence embeds 1-2 spans of
// one class between filler tokens, and the first token of every span is the
// class's head marker.
Dataset generate_synthetic_corpus(int n_types, int sentences_per_type, std::uint64_t seed);

// Plain-text description of each class's span vocabulary, derived from the
// gold spans: the tokens that start its mentions plus the continuation
// tokens. Stands in for an external definition source on synthetic corpora.
std::map<std::string, std::string> derive_type_descriptions(const Dataset& dataset);

// Up to max_examples distinct span surface forms per class, in first-seen order.
std::map<std::string, std::vector<std::string>> derive_type_examples(const Dataset& dataset,
                                                                     std::size_t max_examples = 3);

// JSON-lines, one record per sentence:
//   {"tokens": [...], "tags": [...]?, "spans": [{"start","end","type"}]?}
Dataset load_dataset(const std::string& path);
void write_dataset(const Dataset& dataset, const std::string& path);

nlohmann::json sentence_to_json(const LabeledSentence& s);
LabeledSentence sentence_from_json(const nlohmann::json& record);

}  // namespace fewner::corpus
