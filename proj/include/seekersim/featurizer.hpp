// Copyright 2026 The seekersim Authors
// SPDX-License-Identifier: Apache-2.0
//
// Rule-based linguistic extraction, turn-level aggregation, corpus
// preprocessing, and annotation-agreement statistics. Pure functions over
// immutable inputs.
#pragma once

#include <functional>
#include <map>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "seekersim/profile.hpp"

namespace seekersim {

// ---------------------------------------------------------------------------
// Configuration

struct ExtractionConfig {
  // Upper-open token thresholds on the mean seeker-utterance length:
  // <15 very_short, 15-29 short, 30-59 medium, 60-99 long, >=100 very_long.
  std::vector<double> verbosity_bins = {15, 30, 60, 100};
  // Turn-count thresholds: 4-5 short, 6-8 medium, >=9 long.
  std::vector<int> turns_bins = {6, 9};
  double profanity_threshold = 0.5;  // strict greater-than
  bool exclude_first_seeker_turn = true;
  // Token = whitespace-delimited unit by default; swap in a model tokenizer
  // by replacing this counter.
  std::function<size_t(const std::string&)> token_counter;

  size_t tokens(const std::string& text) const {
    return token_counter ? token_counter(text) : count_tokens(text);
  }
  void check() const;
};

// ---------------------------------------------------------------------------
// Profanity scoring

class ProfanityScorer {
 public:
  virtual ~ProfanityScorer() = default;
  // Probability in [0,1] that the utterance contains profanity.
  virtual double score(const std::string& utterance) const = 0;
};

// Word-list scorer bundled for tests and synthetic data: 1.0 if any lexicon
// word occurs as a whitespace token (case-insensitive), else 0.0.
class WordListProfanityScorer : public ProfanityScorer {
 public:
  explicit WordListProfanityScorer(std::vector<std::string> lexicon);
  double score(const std::string& utterance) const override;

 private:
  std::vector<std::string> lexicon_;
};

// ---------------------------------------------------------------------------
// Linguistic feature extraction

VerbosityLevel extract_verbosity_level(const Dialogue& d, const ExtractionConfig& cfg);
VerbosityLevel bin_verbosity(double mean_tokens, const ExtractionConfig& cfg);

TurnsLevel extract_turns_level(const Dialogue& d, const ExtractionConfig& cfg);
TurnsLevel bin_turns(int turn_count, const ExtractionConfig& cfg);

bool detect_profanity(const Dialogue& d, const ProfanityScorer& scorer,
                      const ExtractionConfig& cfg);

// ---------------------------------------------------------------------------
// Turn-level aggregation

// Arithmetic mean, round half-up, clamped to 1..4.
int aggregate_self_disclosure(const std::vector<int>& turn_scores);

// Empirical frequencies; the negative component absorbs rounding so the
// triple sums to exactly 1.
ReactionProportions aggregate_reactions(const std::vector<Reaction>& turn_labels);

// ---------------------------------------------------------------------------
// Corpus preprocessing

struct PreprocessRules {
  size_t min_turns = 5;
  std::optional<double> min_upvotes;  // applied when metadata carries "upvotes"
  // Keep-predicate over the dialogue's raw text; defaults to accepting all.
  std::function<bool(const Dialogue&)> language_predicate;
  bool strip_symbols = true;  // remove emoji / non-standard symbols
  bool mask_pii = true;
  // Regex -> placeholder, applied in order.
  std::vector<std::pair<std::string, std::string>> pii_patterns;

  static PreprocessRules defaults();
};

struct DropRecord {
  std::string dialogue_id;
  std::string reason;
};

struct PreprocessResult {
  std::vector<Dialogue> kept;
  std::vector<DropRecord> dropped;
};

// Idempotent: preprocess(preprocess(x).kept) == preprocess(x).kept.
PreprocessResult preprocess_corpus(const std::vector<Dialogue>& raw,
                                   const PreprocessRules& rules);

std::string strip_non_standard_symbols(const std::string& text);
std::string mask_pii(const std::string& text,
                     const std::vector<std::pair<std::string, std::string>>& patterns);

// ---------------------------------------------------------------------------
// Agreement statistics

// Fraction of items on which all annotators give the same label.
// labels[a][i] = annotator a's label for item i.
double percent_agreement(const std::vector<std::vector<std::string>>& labels);

// Exact-match rate between a human gold list and LLM labels.
double human_llm_accuracy(const std::vector<std::string>& human_gold,
                          const std::vector<std::string>& llm_labels);

struct FeatureAgreement {
  double iaa_percent_agreement = 0.0;
  double human_llm_accuracy = 0.0;
  size_t n = 0;
};

struct AgreementReport {
  std::map<std::string, FeatureAgreement> per_feature;
};

AgreementReport compute_agreement_report(
    const std::map<std::string, std::vector<std::vector<std::string>>>& annotator_labels,
    const std::map<std::string, std::pair<std::vector<std::string>,
                                          std::vector<std::string>>>& human_vs_llm);

}  // namespace seekersim
