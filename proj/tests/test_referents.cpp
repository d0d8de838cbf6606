#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <string>
#include <vector>

#include "fewner/neural.hpp"
#include "fewner/referents.hpp"

using namespace fewner;
using referents::ClientConfig;
using referents::DefinitionCache;
using referents::ReferentVariant;
using referents::TypeDefinition;

namespace {

const char* kDefinitionsPath = "data/fixtures/definitions.jsonl";
const char* kExamplesPath = "data/fixtures/examples.jsonl";

ClientConfig offline_config() {
  ClientConfig c;
  c.live = false;
  return c;
}

}  // namespace

TEST_SUITE("referents") {

TEST_CASE("fetch_definition serves fixtures from the cache") {
  DefinitionCache cache = DefinitionCache::load(kDefinitionsPath);
  REQUIRE(cache.size() > 0);

  ClientConfig config = offline_config();
  TypeDefinition def = referents::fetch_definition("location", config, cache);
  CHECK(def.type_name == "location");
  CHECK(def.source == "fixture");
  CHECK(def.definition_text.rfind(
            "Location is an entity type that describes a physical space or geographical area",
            0) == 0);

  // Stable across repeated fetches.
  CHECK(referents::fetch_definition("location", config, cache) == def);
}

TEST_CASE("an offline cache miss names the missing type") {
  DefinitionCache cache = DefinitionCache::load(kDefinitionsPath);
  ClientConfig config = offline_config();
  try {
    referents::fetch_definition("corporation", config, cache);
    FAIL("expected an offline cache miss to throw");
  } catch (const std::exception& e) {
    CHECK(std::string(e.what()).find("corporation") != std::string::npos);
  }
}

TEST_CASE("definition cache round trip keeps the generation config") {
  DefinitionCache cache;
  TypeDefinition def;
  def.type_name = "gadget";
  def.definition_text = "Gadget is a small mechanical device.";
  def.source = "llm";
  def.config = referents::GenerationConfig{0.5, 40, "test-model"};
  cache.put(def);
  CHECK(cache.size() == 1);

  const auto path = std::filesystem::temp_directory_path() / "fewner_defs_rt.jsonl";
  cache.save(path.string());
  DefinitionCache loaded = DefinitionCache::load(path.string());
  CHECK(loaded.size() == 1);
  CHECK(loaded.find("gadget") == def);
  CHECK(!loaded.find("widget").has_value());
  std::filesystem::remove(path);

  // A missing file loads as an empty cache rather than failing.
  CHECK(DefinitionCache::load("/nonexistent/defs.jsonl").size() == 0);
}

TEST_CASE("embedding a one-word definition returns that token's row") {
  neural::EncoderParams enc = neural::make_encoder({64, 6, 1}, 11);
  TypeDefinition def{"t", "paris", "fixture", std::nullopt};
  referents::TypeReferent ref = referents::embed_referent(enc, def);
  CHECK(ref.type_name == "t");
  CHECK(ref.provenance == "fixture: paris");
  CHECK(ref.vector == neural::encode_tokens(enc, {"paris"}));
  for (double v : ref.vector) CHECK(std::abs(v) <= 1.0);  // tanh range

  neural::EncoderParams zeroed = enc;
  zeroed.values = neural::zeros_like(zeroed.values);
  for (double v : referents::embed_referent(zeroed, def).vector) CHECK(v == 0.0);

  TypeDefinition empty{"t", "", "fixture", std::nullopt};
  CHECK_THROWS_AS(referents::embed_referent(enc, empty), std::invalid_argument);
}

TEST_CASE("variant names round trip and reject garbage") {
  for (auto v : {ReferentVariant::Mcs, ReferentVariant::Random, ReferentVariant::Name,
                 ReferentVariant::Example}) {
    CHECK(referents::variant_from_string(referents::variant_to_string(v)) == v);
  }
  CHECK_THROWS_AS(referents::variant_from_string("bogus"), std::invalid_argument);
}

TEST_CASE("random referents are seeded, per-type stable vectors") {
  neural::EncoderParams enc = neural::make_encoder({64, 6, 1}, 11);
  DefinitionCache cache;
  ClientConfig config = offline_config();

  auto a = referents::build_referents(ReferentVariant::Random, {"x", "y"}, enc, config, cache,
                                      {}, 7);
  auto b = referents::build_referents(ReferentVariant::Random, {"x", "y"}, enc, config, cache,
                                      {}, 7);
  REQUIRE(a.size() == 2);
  CHECK(a == b);
  CHECK(a[0].vector != a[1].vector);           // types differ
  CHECK(a[0].provenance == "random(7)");
  auto c = referents::build_referents(ReferentVariant::Random, {"x"}, enc, config, cache, {}, 8);
  CHECK(c[0].vector != a[0].vector);           // seeds differ
}

TEST_CASE("name variant embeds the bare type name") {
  neural::EncoderParams enc = neural::make_encoder({64, 6, 1}, 11);
  DefinitionCache cache;
  ClientConfig config = offline_config();

  auto refs = referents::build_referents(ReferentVariant::Name, {"person"}, enc, config, cache,
                                         {}, 0);
  REQUIRE(refs.size() == 1);
  CHECK(refs[0].vector ==
        referents::embed_referent(enc, {"person", "person", "name", std::nullopt}).vector);
  CHECK(refs[0].provenance == "name: person");
}

TEST_CASE("mcs variant embeds cached definitions in request order") {
  neural::EncoderParams enc = neural::make_encoder({64, 6, 1}, 11);
  DefinitionCache cache = DefinitionCache::load(kDefinitionsPath);
  ClientConfig config = offline_config();

  auto refs = referents::build_referents(ReferentVariant::Mcs, {"location", "date"}, enc, config,
                                         cache, {}, 0);
  REQUIRE(refs.size() == 2);
  CHECK(refs[0].type_name == "location");
  CHECK(refs[1].type_name == "date");
  for (const auto& r : refs) {
    const auto def = cache.find(r.type_name);
    REQUIRE(def.has_value());
    CHECK(r.vector == referents::embed_referent(enc, *def).vector);
    CHECK(r.provenance == "fixture: " + def->definition_text);
  }
}

TEST_CASE("example variant appends fixture mentions to the definition") {
  neural::EncoderParams enc = neural::make_encoder({64, 6, 1}, 11);
  DefinitionCache cache = DefinitionCache::load(kDefinitionsPath);
  ClientConfig config = offline_config();
  auto examples = referents::load_example_fixtures(kExamplesPath);
  REQUIRE(examples.count("date") == 1);

  auto refs = referents::build_referents(ReferentVariant::Example, {"date"}, enc, config, cache,
                                         examples, 0);
  REQUIRE(refs.size() == 1);
  // The embedded text is the definition followed by every example mention.
  std::string text = cache.find("date")->definition_text;
  for (const auto& mention : examples.at("date")) text += " " + mention;
  CHECK(refs[0].vector ==
        referents::embed_referent(enc, {"date", text, "example", std::nullopt}).vector);

  CHECK_THROWS(referents::build_referents(ReferentVariant::Example, {"date"}, enc, config, cache,
                                          {}, 0));  // no fixtures for the type
}

TEST_CASE("referent inputs carry tokens for text variants and vectors for random") {
  DefinitionCache cache = DefinitionCache::load(kDefinitionsPath);
  ClientConfig config = offline_config();

  auto text_inputs = referents::build_referent_inputs(ReferentVariant::Mcs, {"location"}, config,
                                                      cache, {}, 0, 6);
  REQUIRE(text_inputs.size() == 1);
  CHECK(!text_inputs[0].tokens.empty());
  CHECK(!text_inputs[0].fixed.has_value());

  auto random_inputs = referents::build_referent_inputs(ReferentVariant::Random, {"location"},
                                                        config, cache, {}, 3, 6);
  REQUIRE(random_inputs.size() == 1);
  CHECK(random_inputs[0].tokens.empty());
  REQUIRE(random_inputs[0].fixed.has_value());
  CHECK(random_inputs[0].fixed->size() == 6);

  auto provider = referents::make_referent_provider(ReferentVariant::Name, config, cache, {}, 0, 6);
  auto provided = provider({"location", "date"});
  CHECK(provided.size() == 2);
  CHECK(provided[0].type_name == "location");
}

}  // TEST_SUITE
