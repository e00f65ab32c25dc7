// Copyright 2026 The seekersim Authors
// SPDX-License-Identifier: Apache-2.0

#include <doctest.h>

#include <set>

#include "seekersim/io.hpp"
#include "seekersim/synth.hpp"

using namespace seekersim;

TEST_CASE("default generator spec validates and stays under a 512 vocab") {
  auto spec = GeneratorSpec::defaults(1, 10);
  CHECK_NOTHROW(spec.validate());
  auto tok = build_vocabulary(spec);
  CHECK(tok.vocab_size() <= 512);
  CHECK(tok.contains(Tokenizer::kEndOfDialogue));
  CHECK(tok.contains("coping=avoidant"));
  CHECK(tok.contains("verbosity=very_long"));
  CHECK(tok.contains("react_neg=4"));
}

TEST_CASE("overlapping marker banks are rejected") {
  auto spec = GeneratorSpec::defaults(1, 10);
  spec.filler_bank.push_back("plan");  // collides with coping bank
  CHECK_THROWS_AS(spec.validate(), ValidationError);
}

TEST_CASE("generation is deterministic per seed and order-independent") {
  auto spec = GeneratorSpec::defaults(42, 30);
  auto a = generate_corpus(spec);
  auto b = generate_corpus(spec);
  REQUIRE(a.dialogues.size() == 30);
  for (size_t i = 0; i < a.dialogues.size(); ++i) {
    CHECK(dialogue_to_json(a.dialogues[i]) == dialogue_to_json(b.dialogues[i]));
  }

  auto spec2 = GeneratorSpec::defaults(43, 30);
  auto c = generate_corpus(spec2);
  CHECK(dialogue_to_json(a.dialogues[0]) != dialogue_to_json(c.dialogues[0]));
}

TEST_CASE("generated dialogues satisfy the dialogue invariants") {
  auto corpus = generate_corpus(GeneratorSpec::defaults(7, 40));
  for (const auto& d : corpus.dialogues) {
    CHECK(validate_dialogue(d).empty());
    REQUIRE(d.profile.has_value());
    CHECK(validate_profile(*d.profile).empty());
    CHECK(d.turns.size() >= 5);
    CHECK(d.turns.size() % 2 == 1);  // seeker-final
  }
}

TEST_CASE("oracle tag inverts generation exactly") {
  auto spec = GeneratorSpec::defaults(123, 120);
  auto corpus = generate_corpus(spec);
  for (const auto& d : corpus.dialogues) {
    auto tagged = oracle_tag(d, spec, /*strict=*/true);
    CHECK(tagged == *d.profile);
  }
}

TEST_CASE("featurizer recovers the sampled linguistic features") {
  auto spec = GeneratorSpec::defaults(9, 150);
  auto corpus = generate_corpus(spec);
  WordListProfanityScorer scorer(spec.profanity_lexicon);
  for (const auto& d : corpus.dialogues) {
    CHECK(extract_verbosity_level(d, spec.extraction) == d.profile->verbosity_level);
    CHECK(extract_turns_level(d, spec.extraction) == d.profile->total_turns_level);
    CHECK(detect_profanity(d, scorer, spec.extraction) == d.profile->profanity_flag);
  }
}

TEST_CASE("mutating a marker token is detectable") {
  auto spec = GeneratorSpec::defaults(11, 1);
  spec.sampler = GeneratorSpec::Sampler::Uniform;
  auto corpus = generate_corpus(spec);
  auto d = corpus.dialogues[0];
  // Replace the coping marker in every follow-up seeker turn with a filler.
  const auto& bank = spec.coping_bank.at(to_string(d.profile->coping_strategy));
  bool first_seeker = true;
  for (auto& t : d.turns) {
    if (t.role != Role::Seeker) continue;
    if (first_seeker) {
      first_seeker = false;
      continue;
    }
    auto words = split_whitespace(t.text);
    for (auto& w : words)
      if (std::find(bank.begin(), bank.end(), w) != bank.end()) w = "the";
    std::string joined;
    for (size_t i = 0; i < words.size(); ++i)
      joined += (i ? " " : "") + words[i];
    t.text = joined;
  }
  CHECK_THROWS_AS(oracle_tag(d, spec, /*strict=*/true), ExtractionError);

  // Lenient mode still produces some label.
  auto lenient = oracle_tag(d, spec, /*strict=*/false);
  CHECK(validate_profile(lenient).empty());
}

TEST_CASE("strict oracle rejects non-synthetic input") {
  auto spec = GeneratorSpec::defaults(1, 1);
  Dialogue d;
  d.dialogue_id = "real";
  d.turns = {{Role::Seeker, "my dog ran away yesterday", 0},
             {Role::Supporter, "that sounds rough", 1},
             {Role::Seeker, "it truly does", 2},
             {Role::Supporter, "tell me", 3},
             {Role::Seeker, "nothing else", 4}};
  CHECK_THROWS_AS(oracle_tag(d, spec, /*strict=*/true), ExtractionError);
}

TEST_CASE("splits follow the 80/10/10 pattern") {
  auto corpus = generate_corpus(GeneratorSpec::defaults(5, 200));
  int train = 0, val = 0, test = 0;
  for (const auto& d : corpus.dialogues) {
    const auto& s = d.metadata.at("split");
    if (s == "train") ++train;
    else if (s == "val") ++val;
    else if (s == "test") ++test;
  }
  CHECK(train == 160);
  CHECK(val == 20);
  CHECK(test == 20);
}

TEST_CASE("every generated word is in the vocabulary") {
  auto spec = GeneratorSpec::defaults(21, 25);
  auto corpus = generate_corpus(spec);
  for (const auto& d : corpus.dialogues)
    for (const auto& t : d.turns)
      for (const auto& w : split_whitespace(t.text))
        CHECK(corpus.tokenizer.contains(w));
}

TEST_CASE("stratified sampling covers every category within a full cycle") {
  auto spec = GeneratorSpec::defaults(2, 540);
  auto corpus = generate_corpus(spec);
  std::set<std::string> coping, style, verbosity, turns;
  for (const auto& d : corpus.dialogues) {
    coping.insert(to_string(d.profile->coping_strategy));
    style.insert(to_string(d.profile->utterance_style));
    verbosity.insert(to_string(d.profile->verbosity_level));
    turns.insert(to_string(d.profile->total_turns_level));
  }
  CHECK(coping.size() == 4);
  CHECK(style.size() == 3);
  CHECK(verbosity.size() == 5);
  CHECK(turns.size() == 3);
}
