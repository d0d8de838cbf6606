#pragma once

#include <array>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

namespace fewner::tagging {

// Tag indices are fixed: tie-breaking, emission tables and checkpoints all
// rely on the order B < I < O < E < S.
enum class Tag : std::uint8_t { B = 0, I = 1, O = 2, E = 3, S = 4 };

inline constexpr int kNumTags = 5;

char tag_to_char(Tag t);
std::optional<Tag> tag_from_char(char c);
std::string tags_to_string(const std::vector<Tag>& tags);

// Token span, inclusive on both ends. type is empty in span-only corpora.
struct Span {
  int start = 0;
  int end = 0;
  std::string type;

  bool operator==(const Span&) const = default;
};

struct TransitionMask {
  std::array<std::array<bool, kNumTags>, kNumTags> allowed{};
  std::array<bool, kNumTags> start_allowed{};
  std::array<bool, kNumTags> end_allowed{};

  // start/end flags plus every adjacent pair
  bool accepts(const std::vector<Tag>& tags) const;
};

TransitionMask build_transition_mask();

// spans must be sorted by start, pairwise disjoint and inside [0, n_tokens).
// Throws std::invalid_argument naming the offending span or pair.
std::vector<Tag> encode_spans_to_bioes(int n_tokens, const std::vector<Span>& spans);

struct DecodeResult {
  std::vector<Span> spans;
  int dropped_fragments = 0;  // maximal runs of tags that complete no S / B I* E pattern
  int dropped_tokens = 0;     // tokens inside those runs
};

// Total function: malformed fragments are dropped and counted, never repaired.
DecodeResult decode_bioes_to_spans(const std::vector<Tag>& tags);

using EmissionRow = std::array<double, kNumTags>;

// Highest-scoring grammar-accepted path; forbidden transitions (and start/end
// tags) carry an additive -1e9 penalty. Ties resolve to the lexicographically
// smallest path under the index order B < I < O < E < S. Throws on empty input.
std::vector<Tag> viterbi_decode(const std::vector<EmissionRow>& emissions,
                                const TransitionMask& mask);

}  // namespace fewner::tagging
