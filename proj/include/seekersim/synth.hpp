// Copyright 2026 The seekersim Authors
// SPDX-License-Identifier: Apache-2.0
//
// Deterministic synthetic-corpus generator. Dialogues are templated
// English-like token sequences whose ground-truth features hold by
// construction: disjoint marker lexicons encode the psychological
// categories, and lengths/turn counts are sampled inside the linguistic
// bins, so the rule extractor and the oracle tagger recover the sampled
// profile exactly.
#pragma once

#include <array>
#include <map>
#include <string>
#include <vector>

#include "seekersim/featurizer.hpp"
#include "seekersim/profile.hpp"
#include "seekersim/tokenizer.hpp"

namespace seekersim {

struct LengthRange {
  int lo = 0;
  int hi = 0;  // inclusive
};

struct GeneratorSpec {
  uint64_t seed = 0;
  int n_dialogues = 1000;
  enum class Sampler { Uniform, Stratified };
  Sampler sampler = Sampler::Stratified;

  // Marker lexicons, one word bank per category. Banks must be pairwise
  // disjoint (checked by validate()).
  std::map<std::string, std::vector<std::string>> coping_bank;
  std::map<std::string, std::vector<std::string>> style_bank;
  std::map<std::string, std::vector<std::string>> resistance_bank;
  std::map<std::string, std::vector<std::string>> engagement_bank;
  std::map<std::string, std::vector<std::string>> disclosure_bank;  // "1".."4"
  std::map<std::string, std::vector<std::string>> reaction_bank;
  std::vector<std::string> profanity_lexicon;
  std::vector<std::string> topics;
  std::vector<std::string> filler_bank;
  std::vector<std::string> supporter_bank;

  // Per-verbosity-level sampling range for seeker-utterance token counts.
  // Ranges sit two tokens inside the extraction bins so per-turn jitter
  // can never cross a bin edge.
  std::array<LengthRange, 5> length_ranges{
      LengthRange{8, 12}, {18, 26}, {36, 52}, {66, 90}, {102, 110}};
  int length_jitter = 2;
  LengthRange opening_length{12, 18};
  LengthRange supporter_length{4, 7};

  // Realizable total turn counts per turns level. Odd counts keep the final
  // turn a seeker turn, so every dialogue ends with the termination token.
  std::map<TurnsLevel, std::vector<int>> turn_counts{
      {TurnsLevel::Short, {5}},
      {TurnsLevel::Medium, {7}},
      {TurnsLevel::Long, {9, 11}}};

  ExtractionConfig extraction;

  static GeneratorSpec defaults(uint64_t seed, int n_dialogues);
  void validate() const;
};

struct SynthCorpus {
  std::vector<Dialogue> dialogues;  // metadata["split"] in {train,val,test}
  Tokenizer tokenizer;
};

// Deterministic per seed; per-dialogue seeds are derived by index so the
// result is independent of generation order.
SynthCorpus generate_corpus(const GeneratorSpec& spec);

// The token vocabulary implied by a generator spec: specials, topics,
// marker banks, profile tokens, supporter and filler words.
Tokenizer build_vocabulary(const GeneratorSpec& spec);

// Inverts the marker encoding. Strict mode demands exactly one marker per
// feature (and errors on non-synthetic input); lenient mode takes majority
// votes with deterministic fallbacks, for re-tagging model-generated text.
SeekerProfile oracle_tag(const Dialogue& d, const GeneratorSpec& spec,
                         bool strict = true);

// Rebuilds the canonical main-problem summary for a topic word.
std::string main_problem_for_topic(const std::string& topic);

}  // namespace seekersim
