#include "fewner/llm_baseline.hpp"

#include <cctype>
#include <fstream>
#include <set>
#include <stdexcept>

#include <nlohmann/json.hpp>

namespace fewner::llm {

namespace {

std::string quote(const std::string& s) { return "'" + s + "'"; }

std::string render_list(const std::vector<std::string>& items) {
  std::string out = "[";
  for (std::size_t i = 0; i < items.size(); ++i) {
    if (i > 0) out += ", ";
    out += quote(items[i]);
  }
  out += "]";
  return out;
}

// Per-token type labels: the covering span's type, O elsewhere.
std::vector<std::string> token_type_labels(const corpus::LabeledSentence& s) {
  std::vector<std::string> labels(s.tokens.size(), "O");
  if (s.spans) {
    for (const tagging::Span& sp : *s.spans) {
      for (int t = sp.start; t <= sp.end && t < static_cast<int>(labels.size()); ++t) {
        if (t >= 0) labels[static_cast<std::size_t>(t)] = sp.type;
      }
    }
  }
  return labels;
}

}  // namespace

std::string NerPrompt::full_text() const {
  return "Definition: " + definition_section + "\n\nFew-shot Samples: " + fewshot_section +
         "\n\nQuery Request: " + query_section;
}

NerPrompt build_ner_prompt(const std::vector<std::string>& entity_list,
                           const std::vector<corpus::LabeledSentence>& support,
                           const std::vector<std::vector<std::string>>& query_tokens) {
  if (entity_list.empty()) {
    throw std::invalid_argument("build_ner_prompt: empty entity list");
  }
  NerPrompt prompt;
  prompt.entity_list = entity_list;
  const std::string rendered_list = render_list(entity_list);

  prompt.definition_section =
      "We have the following entity types in the entity type list " + rendered_list +
      ". We want to annotate each word in the sentence using the above entity types. If a word "
      "does not belong to the above entity types, we label it using the entity tag 'O'. We will "
      "provide some sentences and their corresponding entity type label sequences as examples to "
      "improve your understanding.";

  std::string tuples = "[";
  for (std::size_t i = 0; i < support.size(); ++i) {
    if (i > 0) tuples += ", ";
    tuples += "(" + render_list(support[i].tokens) + ", " +
              render_list(token_type_labels(support[i])) + ")";
  }
  tuples += "]";
  prompt.fewshot_section = "The examples are as follows," + tuples + ".";

  std::string queries = "(";
  for (std::size_t i = 0; i < query_tokens.size(); ++i) {
    if (i > 0) queries += ", ";
    queries += render_list(query_tokens[i]);
  }
  queries += ")";
  prompt.query_section =
      "Now we have the following query sentences, please label sentences with entity types " +
      rendered_list + " or 'O' tag." + queries +
      ". Each sentence result should have the following format: ([sentence words], [sentence "
      "words entity labels]). For each sentence the prediction is a Python tuple,the first "
      "element is a Python list containing sentence words, and the second element is the "
      "corresponding entity label for each sentence word. The results should be several tuples "
      "separated by a single comma character.";
  return prompt;
}

namespace {

// Parses a bracketed list of (possibly quoted) items starting at text[pos]
// == '['. Returns false on malformed input; pos is left one past ']'.
bool parse_bracket_list(const std::string& text, std::size_t& pos,
                        std::vector<std::string>& items) {
  if (pos >= text.size() || text[pos] != '[') return false;
  ++pos;
  items.clear();
  while (pos < text.size()) {
    while (pos < text.size() &&
           (std::isspace(static_cast<unsigned char>(text[pos])) || text[pos] == ',')) {
      ++pos;
    }
    if (pos >= text.size()) return false;
    if (text[pos] == ']') {
      ++pos;
      return true;
    }
    if (text[pos] == '\'' || text[pos] == '"') {
      const char q = text[pos];
      const std::size_t close = text.find(q, pos + 1);
      if (close == std::string::npos) return false;
      items.push_back(text.substr(pos + 1, close - pos - 1));
      pos = close + 1;
    } else {
      std::size_t end = pos;
      while (end < text.size() && text[end] != ',' && text[end] != ']') ++end;
      std::string item = text.substr(pos, end - pos);
      while (!item.empty() && std::isspace(static_cast<unsigned char>(item.back()))) item.pop_back();
      items.push_back(std::move(item));
      pos = end;
    }
  }
  return false;
}

void skip_ws(const std::string& text, std::size_t& pos) {
  while (pos < text.size() && std::isspace(static_cast<unsigned char>(text[pos]))) ++pos;
}

struct RawTuple {
  std::vector<std::string> tokens;
  std::vector<std::string> labels;
};

// Every "([...], [...])" shape in the text, in order; anything else is
// skipped.
std::vector<RawTuple> extract_tuples(const std::string& text) {
  std::vector<RawTuple> tuples;
  std::size_t i = 0;
  while (i < text.size()) {
    if (text[i] != '(') {
      ++i;
      continue;
    }
    std::size_t pos = i + 1;
    skip_ws(text, pos);
    RawTuple t;
    if (!parse_bracket_list(text, pos, t.tokens)) {
      ++i;
      continue;
    }
    skip_ws(text, pos);
    if (pos >= text.size() || text[pos] != ',') {
      ++i;
      continue;
    }
    ++pos;
    skip_ws(text, pos);
    if (!parse_bracket_list(text, pos, t.labels)) {
      ++i;
      continue;
    }
    skip_ws(text, pos);
    if (pos >= text.size() || text[pos] != ')') {
      ++i;
      continue;
    }
    tuples.push_back(std::move(t));
    i = pos + 1;
  }
  return tuples;
}

}  // namespace

ParsedResponse parse_ner_response(const std::string& text,
                                  const std::vector<std::vector<std::string>>& query_tokens,
                                  const std::vector<std::string>& valid_labels) {
  std::vector<RawTuple> tuples = extract_tuples(text);
  const std::set<std::string> valid(valid_labels.begin(), valid_labels.end());

  const std::size_t n = query_tokens.size();
  ParsedResponse out;
  out.labels.resize(n);
  out.parsed_ok.assign(n, false);

  // First pass: claim tuples whose token list matches a query exactly.
  std::vector<int> assigned(n, -1);
  std::vector<bool> claimed(tuples.size(), false);
  for (std::size_t q = 0; q < n; ++q) {
    for (std::size_t t = 0; t < tuples.size(); ++t) {
      if (!claimed[t] && tuples[t].tokens == query_tokens[q]) {
        assigned[q] = static_cast<int>(t);
        claimed[t] = true;
        break;
      }
    }
  }
  // Second pass: remaining queries take remaining tuples in order.
  std::size_t next_tuple = 0;
  for (std::size_t q = 0; q < n; ++q) {
    if (assigned[q] >= 0) continue;
    while (next_tuple < tuples.size() && claimed[next_tuple]) ++next_tuple;
    if (next_tuple < tuples.size()) {
      assigned[q] = static_cast<int>(next_tuple);
      claimed[next_tuple] = true;
    }
  }

  for (std::size_t q = 0; q < n; ++q) {
    const std::size_t len = query_tokens[q].size();
    std::vector<std::string>& labels = out.labels[q];
    labels.assign(len, "O");
    if (assigned[q] < 0) continue;  // stays flagged, all-O
    const RawTuple& t = tuples[static_cast<std::size_t>(assigned[q])];
    for (std::size_t i = 0; i < len && i < t.labels.size(); ++i) {
      if (valid.count(t.labels[i])) labels[i] = t.labels[i];
    }
    out.parsed_ok[q] = t.labels.size() == len;
  }
  return out;
}

std::vector<tagging::Span> group_token_labels(const std::vector<std::string>& labels) {
  std::vector<tagging::Span> spans;
  std::size_t i = 0;
  while (i < labels.size()) {
    if (labels[i] == "O") {
      ++i;
      continue;
    }
    std::size_t j = i;
    while (j + 1 < labels.size() && labels[j + 1] == labels[i]) ++j;
    spans.push_back({static_cast<int>(i), static_cast<int>(j), labels[i]});
    i = j + 1;
  }
  return spans;
}

std::map<int, std::string> load_response_fixtures(const std::string& path) {
  std::ifstream in(path);
  if (!in) {
    throw std::runtime_error("cannot open response fixture file: " + path);
  }
  std::map<int, std::string> out;
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    try {
      nlohmann::json rec = nlohmann::json::parse(line);
      out[rec.at("episode_index").get<int>()] = rec.at("response").get<std::string>();
    } catch (const std::exception& e) {
      throw std::runtime_error(path + ":" + std::to_string(line_no) + ": " + e.what());
    }
  }
  return out;
}

BaselineResult evaluate_llm_baseline(const std::vector<episodes::Episode>& episodes,
                                     const std::map<int, std::string>& responses) {
  BaselineResult result;
  std::vector<std::vector<tagging::Span>> predicted;
  std::vector<std::vector<tagging::Span>> gold;
  for (std::size_t e = 0; e < episodes.size(); ++e) {
    const episodes::Episode& ep = episodes[e];
    auto it = responses.find(static_cast<int>(e));
    if (it == responses.end()) {
      throw std::runtime_error("no canned response for episode " + std::to_string(e));
    }
    std::vector<std::vector<std::string>> query_tokens;
    query_tokens.reserve(ep.query.size());
    for (const corpus::LabeledSentence& q : ep.query) query_tokens.push_back(q.tokens);

    // The prompt is built even offline so the fixture path exercises the same
    // surface the live client sends.
    build_ner_prompt(ep.classes, ep.support, query_tokens);

    ParsedResponse parsed = parse_ner_response(it->second, query_tokens, ep.classes);
    for (std::size_t i = 0; i < query_tokens.size(); ++i) {
      if (!parsed.parsed_ok[i]) ++result.flagged_sentences;
      predicted.push_back(group_token_labels(parsed.labels[i]));
      gold.push_back(ep.query[i].spans ? *ep.query[i].spans : std::vector<tagging::Span>{});
    }
  }
  result.report = metrics::micro_f1(predicted, gold, /*ignore_types=*/false);
  return result;
}

std::vector<std::string> generate_live_responses(const std::vector<episodes::Episode>& episodes,
                                                 const referents::ClientConfig& config) {
  std::vector<std::string> out;
  out.reserve(episodes.size());
  for (const episodes::Episode& ep : episodes) {
    std::vector<std::vector<std::string>> query_tokens;
    for (const corpus::LabeledSentence& q : ep.query) query_tokens.push_back(q.tokens);
    NerPrompt prompt = build_ner_prompt(ep.classes, ep.support, query_tokens);
    out.push_back(referents::llm_complete(prompt.full_text(), config));
  }
  return out;
}

}  // namespace fewner::llm
