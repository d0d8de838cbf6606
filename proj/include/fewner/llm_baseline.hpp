#pragma once

#include <map>
#include <string>
#include <vector>

#include "fewner/corpus.hpp"
#include "fewner/episodes.hpp"
#include "fewner/metrics.hpp"
#include "fewner/referents.hpp"
#include "fewner/tagging.hpp"

namespace fewner::llm {

// Three-section in-context-learning NER prompt: a definition of the labeling
// task over an entity list, support sentences rendered as (tokens, labels)
// tuples, and the query request with the output format.
struct NerPrompt {
  std::vector<std::string> entity_list;
  std::string definition_section;
  std::string fewshot_section;
  std::string query_section;

  std::string full_text() const;
};

// Support sentences are rendered with per-token type labels (the covering
// span's type, O elsewhere). Throws on an empty entity list.
NerPrompt build_ner_prompt(const std::vector<std::string>& entity_list,
                           const std::vector<corpus::LabeledSentence>& support,
                           const std::vector<std::vector<std::string>>& query_tokens);

struct ParsedResponse {
  std::vector<std::vector<std::string>> labels;  // one label per query token
  std::vector<bool> parsed_ok;                   // false -> the all-O fallback
};

// Total parser for "([w, ...], [TAG, ...])" tuples: never throws, aligns
// tuples to queries by token-list equality then by order, pads/truncates to
// token length with O, and maps labels outside valid_labels to O.
ParsedResponse parse_ner_response(const std::string& text,
                                  const std::vector<std::vector<std::string>>& query_tokens,
                                  const std::vector<std::string>& valid_labels);

// Maximal runs of an identical non-O label become one typed span.
std::vector<tagging::Span> group_token_labels(const std::vector<std::string>& labels);

// Canned responses, JSON-lines: {"episode_index": int, "response": str}
std::map<int, std::string> load_response_fixtures(const std::string& path);

struct BaselineResult {
  metrics::EvalReport report;
  int flagged_sentences = 0;  // queries that fell back to all-O
};

// Offline evaluation: one canned response per episode index (missing -> error),
// parsed and scored against the gold query spans, pooled micro-F1.
BaselineResult evaluate_llm_baseline(const std::vector<episodes::Episode>& episodes,
                                     const std::map<int, std::string>& responses);

// Live evaluation path sharing the referent client's transport and rate
// limiting; returns the raw response per episode so runs can be cached as
// fixtures. Never used by tests.
std::vector<std::string> generate_live_responses(const std::vector<episodes::Episode>& episodes,
                                                 const referents::ClientConfig& config);

}  // namespace fewner::llm
