#include "fewner/tagging.hpp"

#include <algorithm>
#include <stdexcept>
#include <string>

namespace fewner::tagging {

namespace {

constexpr double kForbiddenPenalty = -1e9;

int idx(Tag t) { return static_cast<int>(t); }

}  // namespace

char tag_to_char(Tag t) {
  switch (t) {
    case Tag::B: return 'B';
    case Tag::I: return 'I';
    case Tag::O: return 'O';
    case Tag::E: return 'E';
    case Tag::S: return 'S';
  }
  return '?';
}

std::optional<Tag> tag_from_char(char c) {
  switch (c) {
    case 'B': return Tag::B;
    case 'I': return Tag::I;
    case 'O': return Tag::O;
    case 'E': return Tag::E;
    case 'S': return Tag::S;
    default: return std::nullopt;
  }
}

std::string tags_to_string(const std::vector<Tag>& tags) {
  std::string out;
  out.reserve(tags.size());
  for (Tag t : tags) out.push_back(tag_to_char(t));
  return out;
}

bool TransitionMask::accepts(const std::vector<Tag>& tags) const {
  if (tags.empty()) return false;
  if (!start_allowed[idx(tags.front())]) return false;
  if (!end_allowed[idx(tags.back())]) return false;
  for (std::size_t i = 0; i + 1 < tags.size(); ++i) {
    if (!allowed[idx(tags[i])][idx(tags[i + 1])]) return false;
  }
  return true;
}

TransitionMask build_transition_mask() {
  TransitionMask m;
  auto allow = [&m](Tag from, std::initializer_list<Tag> tos) {
    for (Tag to : tos) m.allowed[idx(from)][idx(to)] = true;
  };
  allow(Tag::B, {Tag::I, Tag::E});
  allow(Tag::I, {Tag::I, Tag::E});
  allow(Tag::E, {Tag::B, Tag::O, Tag::S});
  allow(Tag::S, {Tag::B, Tag::O, Tag::S});
  allow(Tag::O, {Tag::B, Tag::O, Tag::S});
  for (Tag t : {Tag::B, Tag::O, Tag::S}) m.start_allowed[idx(t)] = true;
  for (Tag t : {Tag::E, Tag::O, Tag::S}) m.end_allowed[idx(t)] = true;
  return m;
}

std::vector<Tag> encode_spans_to_bioes(int n_tokens, const std::vector<Span>& spans) {
  std::vector<Tag> tags(static_cast<std::size_t>(n_tokens), Tag::O);
  const Span* prev = nullptr;
  for (const Span& s : spans) {
    if (s.start < 0 || s.end < s.start || s.end >= n_tokens) {
      throw std::invalid_argument("span (" + std::to_string(s.start) + "," +
                                  std::to_string(s.end) + ") out of range for length " +
                                  std::to_string(n_tokens));
    }
    if (prev != nullptr && s.start <= prev->end) {
      throw std::invalid_argument("overlapping spans (" + std::to_string(prev->start) + "," +
                                  std::to_string(prev->end) + ") and (" +
                                  std::to_string(s.start) + "," + std::to_string(s.end) + ")");
    }
    if (s.start == s.end) {
      tags[s.start] = Tag::S;
    } else {
      tags[s.start] = Tag::B;
      for (int k = s.start + 1; k < s.end; ++k) tags[k] = Tag::I;
      tags[s.end] = Tag::E;
    }
    prev = &s;
  }
  return tags;
}

DecodeResult decode_bioes_to_spans(const std::vector<Tag>& tags) {
  DecodeResult out;
  const int n = static_cast<int>(tags.size());
  std::vector<bool> dropped(tags.size(), false);
  int i = 0;
  while (i < n) {
    switch (tags[i]) {
      case Tag::O:
        ++i;
        break;
      case Tag::S:
        out.spans.push_back({i, i, ""});
        ++i;
        break;
      case Tag::B: {
        int j = i + 1;
        while (j < n && tags[j] == Tag::I) ++j;
        if (j < n && tags[j] == Tag::E) {
          out.spans.push_back({i, j, ""});
          i = j + 1;
        } else {
          for (int k = i; k < j; ++k) dropped[k] = true;  // unterminated B I*
          i = j;
        }
        break;
      }
      case Tag::I:
      case Tag::E:
        dropped[i] = true;  // orphan continuation
        ++i;
        break;
    }
  }
  for (int k = 0; k < n; ++k) {
    if (!dropped[k]) continue;
    ++out.dropped_tokens;
    if (k == 0 || !dropped[k - 1]) ++out.dropped_fragments;
  }
  return out;
}

std::vector<Tag> viterbi_decode(const std::vector<EmissionRow>& emissions,
                                const TransitionMask& mask) {
  const int n = static_cast<int>(emissions.size());
  if (n == 0) throw std::invalid_argument("viterbi_decode: empty emission table");

  auto trans_penalty = [&mask](int from, int to) {
    return mask.allowed[from][to] ? 0.0 : kForbiddenPenalty;
  };

  // suffix[i][t]: best score of a path covering positions i..n-1 that starts
  // with tag t, including the end penalty at the last position.
  std::vector<std::array<double, kNumTags>> suffix(emissions.size());
  for (int t = 0; t < kNumTags; ++t) {
    suffix[n - 1][t] = emissions[n - 1][t] + (mask.end_allowed[t] ? 0.0 : kForbiddenPenalty);
  }
  for (int i = n - 2; i >= 0; --i) {
    for (int t = 0; t < kNumTags; ++t) {
      double best = trans_penalty(t, 0) + suffix[i + 1][0];
      for (int u = 1; u < kNumTags; ++u) {
        best = std::max(best, trans_penalty(t, u) + suffix[i + 1][u]);
      }
      suffix[i][t] = emissions[i][t] + best;
    }
  }

  // Greedy front-to-back selection; strict > keeps the lowest tag index on
  // ties, so the result is the lexicographically smallest optimal path.
  std::vector<Tag> path(emissions.size(), Tag::B);
  int prev = -1;
  for (int i = 0; i < n; ++i) {
    int best_tag = -1;
    double best_score = 0.0;
    for (int t = 0; t < kNumTags; ++t) {
      double score = suffix[i][t];
      score += (i == 0) ? (mask.start_allowed[t] ? 0.0 : kForbiddenPenalty)
                        : trans_penalty(prev, t);
      if (best_tag < 0 || score > best_score) {
        best_tag = t;
        best_score = score;
      }
    }
    path[i] = static_cast<Tag>(best_tag);
    prev = best_tag;
  }
  return path;
}

}  // namespace fewner::tagging
