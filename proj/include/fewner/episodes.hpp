#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <vector>

#include "fewner/corpus.hpp"

namespace fewner::episodes {

struct Episode {
  std::vector<std::string> classes;  // the N episode types, in draw order
  std::vector<corpus::LabeledSentence> support;
  std::vector<corpus::LabeledSentence> query;

  bool operator==(const Episode&) const = default;
};

struct ClassSplit {
  std::vector<std::string> train_classes;
  std::vector<std::string> dev_classes;
  std::vector<std::string> test_classes;

  bool operator==(const ClassSplit&) const = default;
};

// Seeded shuffle of the inventory sliced by the given fractions (train, dev,
// test). Fractions must sum to 1; every slice must be nonempty. Each returned
// list is sorted.
ClassSplit partition_classes(const std::vector<std::string>& inventory,
                             const std::array<double, 3>& fractions, std::uint64_t seed);

// Greedy sentence-level N-way K-shot sampling from the class pool. Sentences
// are drawn in seeded shuffled order; one is taken while any of its episode
// classes still needs examples. Support and query are disjoint. Spans whose
// type is outside the episode are relabeled to O (dropped; tags re-encoded).
// Throws naming the starved class when the pool cannot fill the request.
Episode sample_episode(const corpus::Dataset& dataset, const std::vector<std::string>& class_pool,
                       int n_way, int k_shot, int query_shots, std::uint64_t seed);

// count episodes sampled with seeds base_seed, base_seed+1, ...
std::vector<Episode> sample_episodes(const corpus::Dataset& dataset,
                                     const std::vector<std::string>& class_pool, int n_way,
                                     int k_shot, int query_shots, int count,
                                     std::uint64_t base_seed);

// JSON-lines, one episode per record: {"classes": [...], "support": [...], "query": [...]}
void persist_episodes(const std::vector<Episode>& episodes, const std::string& path);
std::vector<Episode> load_episodes(const std::string& path);

}  // namespace fewner::episodes
