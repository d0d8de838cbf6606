#include "fewner/corpus.hpp"

#include <algorithm>
#include <cctype>
#include <fstream>
#include <random>
#include <set>
#include <sstream>
#include <stdexcept>

#include <nlohmann/json.hpp>

namespace fewner::corpus {

namespace {

bool is_word_char(unsigned char c) {
  return std::isalnum(c) != 0 || c >= 0x80;
}

char lower_ascii(unsigned char c) {
  return static_cast<char>(std::tolower(c));
}

}  // namespace

std::vector<Token> tokenize(const std::string& text) {
  std::vector<Token> out;
  std::size_t i = 0;
  const std::size_t n = text.size();
  while (i < n) {
    unsigned char c = static_cast<unsigned char>(text[i]);
    if (std::isspace(c)) {
      ++i;
      continue;
    }
    if (is_word_char(c)) {
      std::size_t j = i;
      std::string word;
      while (j < n && is_word_char(static_cast<unsigned char>(text[j]))) {
        word.push_back(lower_ascii(static_cast<unsigned char>(text[j])));
        ++j;
      }
      out.push_back({std::move(word), i, j});
      i = j;
    } else {
      out.push_back({std::string(1, lower_ascii(c)), i, i + 1});
      ++i;
    }
  }
  return out;
}

std::vector<tagging::Tag> bioes_tags(const LabeledSentence& s) {
  if (s.tags) {
    return *s.tags;
  }
  if (s.spans) {
    auto sorted = *s.spans;
    std::sort(sorted.begin(), sorted.end(),
              [](const tagging::Span& a, const tagging::Span& b) { return a.start < b.start; });
    return tagging::encode_spans_to_bioes(static_cast<int>(s.tokens.size()), sorted);
  }
  throw std::invalid_argument("sentence has neither tags nor spans");
}

namespace {

struct AnchorRange {
  std::size_t begin = 0;  // offsets into the cleaned sentence text
  std::size_t end = 0;
};

// Strips [[...]] markers, resolving [[target|shown]] to the shown text, and
// records where each anchor landed in the cleaned string.
void strip_markers(const std::string& sentence, std::string& clean,
                   std::vector<AnchorRange>& anchors) {
  std::size_t i = 0;
  const std::size_t n = sentence.size();
  while (i < n) {
    if (i + 1 < n && sentence[i] == '[' && sentence[i + 1] == '[') {
      std::size_t close = sentence.find("]]", i + 2);
      std::string inner = sentence.substr(i + 2, close - (i + 2));
      std::size_t pipe = inner.rfind('|');
      std::string shown = pipe == std::string::npos ? inner : inner.substr(pipe + 1);
      anchors.push_back({clean.size(), clean.size() + shown.size()});
      clean += shown;
      i = close + 2;
    } else {
      clean.push_back(sentence[i]);
      ++i;
    }
  }
}

}  // namespace

AnnotationResult annotate_hyperlinks(const MarkupDocument& doc) {
  const std::string& text = doc.text;
  // Validate marker balance up front so later passes can assume it.
  std::size_t open_at = 0;
  int depth = 0;
  for (std::size_t i = 0; i + 1 < text.size(); ++i) {
    if (text[i] == '[' && text[i + 1] == '[') {
      if (depth > 0) {
        throw std::invalid_argument("nested [[ marker at byte offset " + std::to_string(i) +
                                    " in document " + doc.doc_id);
      }
      depth = 1;
      open_at = i;
      ++i;
    } else if (text[i] == ']' && text[i + 1] == ']') {
      if (depth == 0) {
        throw std::invalid_argument("unmatched ]] marker at byte offset " + std::to_string(i) +
                                    " in document " + doc.doc_id);
      }
      depth = 0;
      ++i;
    }
  }
  if (depth != 0) {
    throw std::invalid_argument("unclosed [[ marker at byte offset " + std::to_string(open_at) +
                                " in document " + doc.doc_id);
  }

  // Split into sentences on terminators outside markers; keep the terminator.
  std::vector<std::string> raw_sentences;
  std::size_t sent_start = 0;
  depth = 0;
  for (std::size_t i = 0; i < text.size(); ++i) {
    if (i + 1 < text.size() && text[i] == '[' && text[i + 1] == '[') {
      depth = 1;
      ++i;
    } else if (i + 1 < text.size() && text[i] == ']' && text[i + 1] == ']') {
      depth = 0;
      ++i;
    } else if (depth == 0 && (text[i] == '.' || text[i] == '?' || text[i] == '!')) {
      raw_sentences.push_back(text.substr(sent_start, i + 1 - sent_start));
      sent_start = i + 1;
    }
  }
  if (sent_start < text.size()) {
    raw_sentences.push_back(text.substr(sent_start));
  }

  AnnotationResult result;
  for (const std::string& raw : raw_sentences) {
    std::string clean;
    std::vector<AnchorRange> anchors;
    strip_markers(raw, clean, anchors);

    std::vector<Token> tokens = tokenize(clean);
    std::vector<tagging::Span> spans;
    for (const AnchorRange& a : anchors) {
      int first = -1;
      int last = -1;
      for (std::size_t t = 0; t < tokens.size(); ++t) {
        if (tokens[t].start >= a.begin && tokens[t].end <= a.end) {
          if (first < 0) first = static_cast<int>(t);
          last = static_cast<int>(t);
        }
      }
      if (first >= 0) {
        spans.push_back({first, last, ""});
      }
    }
    if (spans.empty()) {
      ++result.discarded;
      continue;
    }
    LabeledSentence sentence;
    sentence.tokens.reserve(tokens.size());
    for (const Token& t : tokens) sentence.tokens.push_back(t.text);
    sentence.tags = tagging::encode_spans_to_bioes(static_cast<int>(tokens.size()), spans);
    result.sentences.push_back(std::move(sentence));
  }
  return result;
}

namespace {

constexpr int kEntityPoolSize = 400;
constexpr int kMarkersPerType = 4;

const std::vector<std::string>& filler_vocab() {
  static const std::vector<std::string> kFillers = {
      "the",   "a",     "when",  "after", "before", "near",  "under", "over",
      "again", "still", "quite", "some",  "many",   "few",   "both",  "other",
      "went",  "came",  "said",  "saw",   "made",   "found", "took",  "left",
      "home",  "road",  "night", "day",   "time",   "year",  "thing", "way",
      "back",  "down",  "out",   "in",    "up",     "off",   "on",    "about"};
  return kFillers;
}

std::string entity_token(int index) {
  char buf[16];
  std::snprintf(buf, sizeof(buf), "ent%03d", index);
  return buf;
}

}  // namespace

Dataset generate_synthetic_corpus(int n_types, int sentences_per_type, std::uint64_t seed) {
  if (n_types < 1 || sentences_per_type < 1) {
    throw std::invalid_argument("generate_synthetic_corpus: n_types and sentences_per_type must be >= 1");
  }
  if (n_types * kMarkersPerType > kEntityPoolSize) {
    throw std::invalid_argument("generate_synthetic_corpus: at most " +
                                std::to_string(kEntityPoolSize / kMarkersPerType) +
                                " types supported, got " + std::to_string(n_types));
  }

  std::mt19937_64 rng(seed);
  std::vector<int> pool(kEntityPoolSize);
  for (int i = 0; i < kEntityPoolSize; ++i) pool[i] = i;
  std::shuffle(pool.begin(), pool.end(), rng);

  // Disjoint marker vocabularies; slot 0 is the class head token that starts
  // every span of that class.
  std::vector<std::vector<std::string>> markers(n_types);
  for (int c = 0; c < n_types; ++c) {
    for (int m = 0; m < kMarkersPerType; ++m) {
      markers[c].push_back(entity_token(pool[c * kMarkersPerType + m]));
    }
  }

  const auto& fillers = filler_vocab();
  std::uniform_int_distribution<int> filler_pick(0, static_cast<int>(fillers.size()) - 1);
  std::uniform_int_distribution<int> filler_run(1, 3);
  std::uniform_int_distribution<int> span_count(1, 2);
  std::uniform_int_distribution<int> span_len(1, 2);
  std::uniform_int_distribution<int> tail_pick(1, kMarkersPerType - 1);

  Dataset dataset;
  for (int c = 0; c < n_types; ++c) {
    const std::string type_name = "type" + std::to_string(c);
    dataset.class_inventory.push_back(type_name);
    for (int s = 0; s < sentences_per_type; ++s) {
      LabeledSentence sentence;
      std::vector<tagging::Span> spans;
      int n_spans = span_count(rng);
      for (int sp = 0; sp < n_spans; ++sp) {
        int run = filler_run(rng);
        for (int f = 0; f < run; ++f) sentence.tokens.push_back(fillers[filler_pick(rng)]);
        int start = static_cast<int>(sentence.tokens.size());
        sentence.tokens.push_back(markers[c][0]);
        if (span_len(rng) == 2) {
          sentence.tokens.push_back(markers[c][tail_pick(rng)]);
        }
        spans.push_back({start, static_cast<int>(sentence.tokens.size()) - 1, type_name});
      }
      int run = filler_run(rng);
      for (int f = 0; f < run; ++f) sentence.tokens.push_back(fillers[filler_pick(rng)]);
      sentence.tokens.push_back(".");
      sentence.tags = tagging::encode_spans_to_bioes(static_cast<int>(sentence.tokens.size()), spans);
      sentence.spans = std::move(spans);
      dataset.sentences.push_back(std::move(sentence));
    }
  }
  std::sort(dataset.class_inventory.begin(), dataset.class_inventory.end());
  return dataset;
}

std::map<std::string, std::string> derive_type_descriptions(const Dataset& dataset) {
  struct SpanTokens {
    std::set<std::string> heads;
    std::set<std::string> tails;
  };
  std::map<std::string, SpanTokens> per_type;
  for (const LabeledSentence& s : dataset.sentences) {
    if (!s.spans) continue;
    for (const tagging::Span& sp : *s.spans) {
      SpanTokens& tt = per_type[sp.type];
      tt.heads.insert(s.tokens[sp.start]);
      for (int i = sp.start + 1; i <= sp.end; ++i) tt.tails.insert(s.tokens[i]);
    }
  }
  auto join_or = [](const std::set<std::string>& words) {
    std::string out;
    for (const std::string& w : words) {
      if (!out.empty()) out += " or ";
      out += w;
    }
    return out;
  };
  std::map<std::string, std::string> descriptions;
  for (const auto& [type, tt] : per_type) {
    std::string text = type + " mentions start with " + join_or(tt.heads);
    if (!tt.tails.empty()) text += " and may continue with " + join_or(tt.tails);
    descriptions[type] = std::move(text);
  }
  return descriptions;
}

std::map<std::string, std::vector<std::string>> derive_type_examples(const Dataset& dataset,
                                                                     std::size_t max_examples) {
  std::map<std::string, std::vector<std::string>> examples;
  std::map<std::string, std::set<std::string>> seen;
  for (const LabeledSentence& s : dataset.sentences) {
    if (!s.spans) continue;
    for (const tagging::Span& sp : *s.spans) {
      if (examples[sp.type].size() >= max_examples) continue;
      std::string surface;
      for (int i = sp.start; i <= sp.end; ++i) {
        if (!surface.empty()) surface += " ";
        surface += s.tokens[i];
      }
      if (seen[sp.type].insert(surface).second) examples[sp.type].push_back(std::move(surface));
    }
  }
  return examples;
}

nlohmann::json sentence_to_json(const LabeledSentence& s) {
  nlohmann::json record;
  record["tokens"] = s.tokens;
  if (s.tags) {
    std::vector<std::string> symbols;
    symbols.reserve(s.tags->size());
    for (tagging::Tag t : *s.tags) symbols.emplace_back(1, tagging::tag_to_char(t));
    record["tags"] = symbols;
  }
  if (s.spans) {
    nlohmann::json arr = nlohmann::json::array();
    for (const tagging::Span& sp : *s.spans) {
      arr.push_back({{"start", sp.start}, {"end", sp.end}, {"type", sp.type}});
    }
    record["spans"] = arr;
  }
  return record;
}

LabeledSentence sentence_from_json(const nlohmann::json& record) {
  LabeledSentence s;
  if (!record.contains("tokens") || !record["tokens"].is_array()) {
    throw std::invalid_argument("sentence record missing \"tokens\" array");
  }
  s.tokens = record["tokens"].get<std::vector<std::string>>();
  if (record.contains("tags")) {
    std::vector<tagging::Tag> tags;
    for (const auto& sym : record["tags"]) {
      std::string v = sym.get<std::string>();
      std::optional<tagging::Tag> tag = v.size() == 1 ? tagging::tag_from_char(v[0]) : std::nullopt;
      if (!tag) {
        throw std::invalid_argument("tag symbol must be one of B I O E S, got \"" + v + "\"");
      }
      tags.push_back(*tag);
    }
    if (tags.size() != s.tokens.size()) {
      throw std::invalid_argument("tag sequence length does not match token count");
    }
    s.tags = std::move(tags);
  }
  if (record.contains("spans")) {
    std::vector<tagging::Span> spans;
    for (const auto& rec : record["spans"]) {
      spans.push_back({rec.at("start").get<int>(), rec.at("end").get<int>(),
                       rec.at("type").get<std::string>()});
    }
    s.spans = std::move(spans);
  }
  if (!s.tags && !s.spans) {
    throw std::invalid_argument("sentence record needs \"tags\" or \"spans\"");
  }
  return s;
}

Dataset load_dataset(const std::string& path) {
  std::ifstream in(path);
  if (!in) {
    throw std::runtime_error("cannot open dataset file: " + path);
  }
  Dataset dataset;
  std::set<std::string> types;
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    try {
      nlohmann::json record = nlohmann::json::parse(line);
      LabeledSentence s = sentence_from_json(record);
      if (s.spans) {
        for (const tagging::Span& sp : *s.spans) {
          if (!sp.type.empty()) types.insert(sp.type);
        }
      }
      dataset.sentences.push_back(std::move(s));
    } catch (const std::exception& e) {
      throw std::runtime_error(path + ":" + std::to_string(line_no) + ": " + e.what());
    }
  }
  dataset.class_inventory.assign(types.begin(), types.end());
  return dataset;
}

void write_dataset(const Dataset& dataset, const std::string& path) {
  std::ofstream out(path);
  if (!out) {
    throw std::runtime_error("cannot write dataset file: " + path);
  }
  for (const LabeledSentence& s : dataset.sentences) {
    out << sentence_to_json(s).dump() << "\n";
  }
}

}  // namespace fewner::corpus
