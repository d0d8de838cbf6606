#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "fewner/classifier.hpp"
#include "fewner/neural.hpp"

namespace fewner::referents {

struct GenerationConfig {
  double temperature = 0.7;
  int max_length = 80;
  std::string model = "text-davinci-003";

  bool operator==(const GenerationConfig&) const = default;
};

struct TypeDefinition {
  std::string type_name;
  std::string definition_text;
  std::string source;  // llm | fixture | name | example | random
  std::optional<GenerationConfig> config;

  bool operator==(const TypeDefinition&) const = default;
};

struct TypeReferent {
  std::string type_name;
  std::vector<double> vector;
  std::string provenance;

  bool operator==(const TypeReferent&) const = default;
};

// JSON-lines definition cache:
//   {"type": str, "definition": str, "source": str, "config": {...}?}
class DefinitionCache {
 public:
  DefinitionCache() = default;
  static DefinitionCache load(const std::string& path);  // missing file -> empty cache

  void save(const std::string& path) const;
  std::optional<TypeDefinition> find(const std::string& type_name) const;
  void put(const TypeDefinition& def);
  std::size_t size() const { return entries_.size(); }

 private:
  std::map<std::string, TypeDefinition> entries_;
};

struct ClientConfig {
  std::string cache_path;
  bool live = false;             // offline-first; live requests are opt-in
  std::string endpoint_host;     // e.g. "api.example.com"
  int endpoint_port = 443;
  std::string endpoint_path = "/v1/completions";
  GenerationConfig generation;
  int max_retries = 3;
  double backoff_seconds = 1.0;  // doubled per retry
  double requests_per_minute = 20.0;
  std::string api_key;           // read from LLM_API_KEY when empty
};

// Cache first; on a miss, a live request when enabled (the response is
// written back to the cache), otherwise an error naming the type.
TypeDefinition fetch_definition(const std::string& type_name, const ClientConfig& config,
                                DefinitionCache& cache);

// Shared LLM transport: POST a completion request with retries, exponential
// backoff, and rate limiting. Used by the definition fetcher and by the
// in-context baseline's live path.
std::string llm_complete(const std::string& prompt, const ClientConfig& config);

// V^n: mean of the sentence encoder's contextual rows over the tokenized
// definition text.
TypeReferent embed_referent(const neural::ParamVector& values, const neural::EncoderDims& dims,
                            const std::string& prefix, const TypeDefinition& def);
TypeReferent embed_referent(const neural::EncoderParams& sentence_encoder,
                            const TypeDefinition& def);

enum class ReferentVariant { Mcs, Random, Name, Example };

ReferentVariant variant_from_string(const std::string& name);
std::string variant_to_string(ReferentVariant v);

// Example mentions per type, JSON-lines: {"type": str, "examples": [str, ...]}
std::map<std::string, std::vector<std::string>> load_example_fixtures(const std::string& path);

// One referent per requested type, in request order, embedded with the given
// sentence encoder. mcs: cached/live definition text; name: the bare type
// name; example: definition text plus fixture example mentions; random:
// seeded standard-normal vector (per-type, stable across calls).
std::vector<TypeReferent> build_referents(ReferentVariant variant,
                                          const std::vector<std::string>& types,
                                          const neural::EncoderParams& sentence_encoder,
                                          const ClientConfig& config, DefinitionCache& cache,
                                          const std::map<std::string, std::vector<std::string>>& examples,
                                          std::uint64_t seed);

// The same variants as classifier-loss inputs: text variants carry definition
// tokens (re-encoded whenever the sentence encoder changes), random carries a
// fixed vector.
std::vector<classifier::ReferentInput> build_referent_inputs(
    ReferentVariant variant, const std::vector<std::string>& types, const ClientConfig& config,
    DefinitionCache& cache, const std::map<std::string, std::vector<std::string>>& examples,
    std::uint64_t seed, std::size_t width);

// Provider closing over the variant and fixtures for meta_train_classifier.
classifier::ReferentProvider make_referent_provider(
    ReferentVariant variant, const ClientConfig& config, DefinitionCache& cache,
    std::map<std::string, std::vector<std::string>> examples, std::uint64_t seed,
    std::size_t width);

}  // namespace fewner::referents
