#include "fewner/episodes.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <map>
#include <numeric>
#include <random>
#include <set>
#include <stdexcept>

#include <nlohmann/json.hpp>

namespace fewner::episodes {

ClassSplit partition_classes(const std::vector<std::string>& inventory,
                             const std::array<double, 3>& fractions, std::uint64_t seed) {
  double total = fractions[0] + fractions[1] + fractions[2];
  if (std::abs(total - 1.0) > 1e-9) {
    throw std::invalid_argument("partition_classes: fractions must sum to 1, got " +
                                std::to_string(total));
  }
  std::vector<std::string> classes(inventory.begin(), inventory.end());
  std::sort(classes.begin(), classes.end());
  classes.erase(std::unique(classes.begin(), classes.end()), classes.end());

  const auto n = static_cast<long>(classes.size());
  long n_train = std::lround(fractions[0] * static_cast<double>(n));
  long n_dev = std::lround(fractions[1] * static_cast<double>(n));
  long n_test = n - n_train - n_dev;
  if (n_train < 1 || n_dev < 1 || n_test < 1) {
    throw std::invalid_argument("partition_classes: inventory of " + std::to_string(n) +
                                " classes cannot give nonempty train/dev/test splits");
  }

  std::mt19937_64 rng(seed);
  std::shuffle(classes.begin(), classes.end(), rng);

  ClassSplit split;
  split.train_classes.assign(classes.begin(), classes.begin() + n_train);
  split.dev_classes.assign(classes.begin() + n_train, classes.begin() + n_train + n_dev);
  split.test_classes.assign(classes.begin() + n_train + n_dev, classes.end());
  std::sort(split.train_classes.begin(), split.train_classes.end());
  std::sort(split.dev_classes.begin(), split.dev_classes.end());
  std::sort(split.test_classes.begin(), split.test_classes.end());
  return split;
}

namespace {

// Spans of the sentence restricted to episode classes; tags re-encoded.
corpus::LabeledSentence restrict_to_episode(const corpus::LabeledSentence& s,
                                            const std::set<std::string>& classes) {
  corpus::LabeledSentence out;
  out.tokens = s.tokens;
  std::vector<tagging::Span> kept;
  if (s.spans) {
    for (const tagging::Span& sp : *s.spans) {
      if (classes.count(sp.type)) kept.push_back(sp);
    }
  }
  std::sort(kept.begin(), kept.end(),
            [](const tagging::Span& a, const tagging::Span& b) { return a.start < b.start; });
  out.tags = tagging::encode_spans_to_bioes(static_cast<int>(out.tokens.size()), kept);
  out.spans = std::move(kept);
  return out;
}

// Greedy fill: walk candidate sentence indices in order, taking a sentence
// while any episode class it mentions still needs shots. Advances `cursor`.
std::vector<int> greedy_fill(const corpus::Dataset& dataset, const std::vector<int>& order,
                             std::size_t& cursor, const std::vector<std::string>& classes,
                             int shots, const char* phase) {
  std::map<std::string, int> need;
  for (const std::string& c : classes) need[c] = shots;
  int remaining = static_cast<int>(classes.size()) * shots;

  std::vector<int> picked;
  while (remaining > 0 && cursor < order.size()) {
    int idx = order[cursor++];
    const corpus::LabeledSentence& s = dataset.sentences[idx];
    bool useful = false;
    if (s.spans) {
      for (const tagging::Span& sp : *s.spans) {
        auto it = need.find(sp.type);
        if (it != need.end() && it->second > 0) {
          useful = true;
          break;
        }
      }
    }
    if (!useful) continue;
    picked.push_back(idx);
    for (const tagging::Span& sp : *s.spans) {
      auto it = need.find(sp.type);
      if (it != need.end() && it->second > 0) {
        --it->second;
        --remaining;
      }
    }
  }
  if (remaining > 0) {
    for (const auto& [cls, left] : need) {
      if (left > 0) {
        throw std::runtime_error(std::string("sample_episode: dataset exhausted while filling ") +
                                 phase + " for class \"" + cls + "\"");
      }
    }
  }
  return picked;
}

}  // namespace

Episode sample_episode(const corpus::Dataset& dataset, const std::vector<std::string>& class_pool,
                       int n_way, int k_shot, int query_shots, std::uint64_t seed) {
  if (n_way < 1 || k_shot < 1 || query_shots < 1) {
    throw std::invalid_argument("sample_episode: n_way, k_shot, query_shots must be >= 1");
  }
  std::vector<std::string> pool(class_pool.begin(), class_pool.end());
  std::sort(pool.begin(), pool.end());
  pool.erase(std::unique(pool.begin(), pool.end()), pool.end());
  if (static_cast<int>(pool.size()) < n_way) {
    throw std::invalid_argument("sample_episode: class pool has " + std::to_string(pool.size()) +
                                " classes, need " + std::to_string(n_way));
  }

  std::mt19937_64 rng(seed);
  std::shuffle(pool.begin(), pool.end(), rng);

  Episode episode;
  episode.classes.assign(pool.begin(), pool.begin() + n_way);
  std::set<std::string> class_set(episode.classes.begin(), episode.classes.end());

  std::vector<int> order;
  for (std::size_t i = 0; i < dataset.sentences.size(); ++i) {
    const corpus::LabeledSentence& s = dataset.sentences[i];
    if (!s.spans) continue;
    bool relevant = std::any_of(s.spans->begin(), s.spans->end(), [&](const tagging::Span& sp) {
      return class_set.count(sp.type) > 0;
    });
    if (relevant) order.push_back(static_cast<int>(i));
  }
  std::shuffle(order.begin(), order.end(), rng);

  std::size_t cursor = 0;
  std::vector<int> support_idx = greedy_fill(dataset, order, cursor, episode.classes, k_shot, "support");
  std::vector<int> query_idx = greedy_fill(dataset, order, cursor, episode.classes, query_shots, "query");

  for (int idx : support_idx) {
    episode.support.push_back(restrict_to_episode(dataset.sentences[idx], class_set));
  }
  for (int idx : query_idx) {
    episode.query.push_back(restrict_to_episode(dataset.sentences[idx], class_set));
  }
  return episode;
}

std::vector<Episode> sample_episodes(const corpus::Dataset& dataset,
                                     const std::vector<std::string>& class_pool, int n_way,
                                     int k_shot, int query_shots, int count,
                                     std::uint64_t base_seed) {
  std::vector<Episode> out;
  out.reserve(static_cast<std::size_t>(count));
  for (int i = 0; i < count; ++i) {
    out.push_back(sample_episode(dataset, class_pool, n_way, k_shot, query_shots,
                                 base_seed + static_cast<std::uint64_t>(i)));
  }
  return out;
}

void persist_episodes(const std::vector<Episode>& episodes, const std::string& path) {
  std::ofstream out(path);
  if (!out) {
    throw std::runtime_error("cannot write episode file: " + path);
  }
  for (const Episode& ep : episodes) {
    nlohmann::json record;
    record["classes"] = ep.classes;
    nlohmann::json support = nlohmann::json::array();
    for (const auto& s : ep.support) support.push_back(corpus::sentence_to_json(s));
    nlohmann::json query = nlohmann::json::array();
    for (const auto& s : ep.query) query.push_back(corpus::sentence_to_json(s));
    record["support"] = std::move(support);
    record["query"] = std::move(query);
    out << record.dump() << "\n";
  }
}

std::vector<Episode> load_episodes(const std::string& path) {
  std::ifstream in(path);
  if (!in) {
    throw std::runtime_error("cannot open episode file: " + path);
  }
  std::vector<Episode> episodes;
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    try {
      nlohmann::json record = nlohmann::json::parse(line);
      Episode ep;
      ep.classes = record.at("classes").get<std::vector<std::string>>();
      for (const auto& rec : record.at("support")) ep.support.push_back(corpus::sentence_from_json(rec));
      for (const auto& rec : record.at("query")) ep.query.push_back(corpus::sentence_from_json(rec));
      episodes.push_back(std::move(ep));
    } catch (const std::exception& e) {
      throw std::runtime_error(path + ":" + std::to_string(line_no) + ": " + e.what());
    }
  }
  return episodes;
}

}  // namespace fewner::episodes
