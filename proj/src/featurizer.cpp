// Copyright 2026 The seekersim Authors
// SPDX-License-Identifier: Apache-2.0

#include "seekersim/featurizer.hpp"

#include <algorithm>
#include <cmath>
#include <regex>

namespace seekersim {

void ExtractionConfig::check() const {
  expect(verbosity_bins.size() == 4, "verbosity_bins must have 4 thresholds");
  expect(turns_bins.size() == 2, "turns_bins must have 2 thresholds");
  expect(std::is_sorted(verbosity_bins.begin(), verbosity_bins.end()) &&
             std::adjacent_find(verbosity_bins.begin(), verbosity_bins.end()) ==
                 verbosity_bins.end(),
         "verbosity_bins must be strictly increasing");
  expect(turns_bins[0] < turns_bins[1], "turns_bins must be strictly increasing");
  expect(profanity_threshold > 0.0 && profanity_threshold < 1.0,
         "profanity_threshold must lie in (0,1)");
}

// ---------------------------------------------------------------------------
// Profanity

WordListProfanityScorer::WordListProfanityScorer(std::vector<std::string> lexicon) {
  for (auto& w : lexicon) lexicon_.push_back(to_lower(w));
}

double WordListProfanityScorer::score(const std::string& utterance) const {
  for (const auto& tok : split_whitespace(to_lower(utterance))) {
    std::string t = tok;
    while (!t.empty() && !std::isalnum(static_cast<unsigned char>(t.back()))) t.pop_back();
    if (std::find(lexicon_.begin(), lexicon_.end(), t) != lexicon_.end()) return 1.0;
  }
  return 0.0;
}

bool detect_profanity(const Dialogue& d, const ProfanityScorer& scorer,
                      const ExtractionConfig& cfg) {
  cfg.check();
  for (size_t i = 0; i < d.turns.size(); ++i) {
    if (d.turns[i].role != Role::Seeker) continue;
    double s;
    try {
      s = scorer.score(d.turns[i].text);
    } catch (const std::exception& e) {
      throw ExtractionError("profanity scorer failed on utterance " +
                            std::to_string(i) + ": " + e.what());
    }
    if (!(s >= 0.0 && s <= 1.0))
      throw ExtractionError("profanity score out of [0,1] on utterance " +
                            std::to_string(i));
    if (s > cfg.profanity_threshold) return true;
  }
  return false;
}

// ---------------------------------------------------------------------------
// Verbosity / turns

VerbosityLevel bin_verbosity(double mean_tokens, const ExtractionConfig& cfg) {
  const auto& b = cfg.verbosity_bins;
  if (mean_tokens < b[0]) return VerbosityLevel::VeryShort;
  if (mean_tokens < b[1]) return VerbosityLevel::Short;
  if (mean_tokens < b[2]) return VerbosityLevel::Medium;
  if (mean_tokens < b[3]) return VerbosityLevel::Long;
  return VerbosityLevel::VeryLong;
}

VerbosityLevel extract_verbosity_level(const Dialogue& d, const ExtractionConfig& cfg) {
  cfg.check();
  double total = 0.0;
  size_t n = 0;
  bool first_seen = false;
  for (const auto& t : d.turns) {
    if (t.role != Role::Seeker) continue;
    if (!first_seen) {
      first_seen = true;
      if (cfg.exclude_first_seeker_turn) continue;
    }
    total += static_cast<double>(cfg.tokens(t.text));
    ++n;
  }
  if (n == 0)
    throw ExtractionError("no countable seeker turns in dialogue '" +
                          d.dialogue_id + "'");
  return bin_verbosity(total / static_cast<double>(n), cfg);
}

TurnsLevel bin_turns(int turn_count, const ExtractionConfig& cfg) {
  if (turn_count < cfg.turns_bins[0]) return TurnsLevel::Short;
  if (turn_count < cfg.turns_bins[1]) return TurnsLevel::Medium;
  return TurnsLevel::Long;
}

TurnsLevel extract_turns_level(const Dialogue& d, const ExtractionConfig& cfg) {
  cfg.check();
  int n = static_cast<int>(d.turns.size());
  if (n < 4)
    throw ExtractionError("dialogue '" + d.dialogue_id + "' has " +
                          std::to_string(n) + " turns; need at least 4");
  return bin_turns(n, cfg);
}

// ---------------------------------------------------------------------------
// Aggregation

int aggregate_self_disclosure(const std::vector<int>& turn_scores) {
  if (turn_scores.empty())
    throw ExtractionError("cannot aggregate empty self-disclosure scores");
  double sum = 0.0;
  for (int s : turn_scores) sum += s;
  double mean = sum / static_cast<double>(turn_scores.size());
  int rounded = static_cast<int>(std::floor(mean + 0.5));  // half-up
  return std::clamp(rounded, kSelfDisclosureMin, kSelfDisclosureMax);
}

ReactionProportions aggregate_reactions(const std::vector<Reaction>& turn_labels) {
  if (turn_labels.empty())
    throw ExtractionError("cannot aggregate empty reaction labels");
  double n = static_cast<double>(turn_labels.size());
  size_t pos = 0, neu = 0;
  for (Reaction r : turn_labels) {
    if (r == Reaction::Positive) ++pos;
    else if (r == Reaction::Neutral) ++neu;
  }
  ReactionProportions out;
  out.positive = static_cast<double>(pos) / n;
  out.neutral = static_cast<double>(neu) / n;
  // Grouped to match sum()'s association so the triple sums to exactly 1.
  out.negative = 1.0 - (out.positive + out.neutral);
  return out;
}

// ---------------------------------------------------------------------------
// Preprocessing

PreprocessRules PreprocessRules::defaults() {
  PreprocessRules r;
  r.pii_patterns = {
      {R"((https?://|www\.)[^\s]+)", "[URL]"},
      {R"([A-Za-z0-9._%+-]+@[A-Za-z0-9.-]+\.[A-Za-z]{2,})", "[EMAIL]"},
      {R"(\(\d{3}\)\s?\d{3}[-.\s]\d{4})", "[PHONE]"},
      {R"(\+?\d{1,3}[-.\s]?\d{3}[-.\s]?\d{3}[-.\s]?\d{4})", "[PHONE]"},
      {R"(@[A-Za-z0-9_]{2,})", "[USER]"},
      {R"(\bu/[A-Za-z0-9_-]+)", "[USER]"},
  };
  return r;
}

std::string strip_non_standard_symbols(const std::string& text) {
  // Keep printable ASCII; everything else (emoji, control bytes, decorative
  // unicode) is dropped. Whitespace runs collapse to one space.
  std::string out;
  out.reserve(text.size());
  bool pending_space = false;
  for (unsigned char c : text) {
    if (c == ' ' || c == '\t' || c == '\n' || c == '\r') {
      pending_space = true;
      continue;
    }
    if (c < 0x20 || c > 0x7e) continue;
    if (pending_space && !out.empty()) out.push_back(' ');
    pending_space = false;
    out.push_back(static_cast<char>(c));
  }
  return out;
}

std::string mask_pii(const std::string& text,
                     const std::vector<std::pair<std::string, std::string>>& patterns) {
  std::string out = text;
  for (const auto& [pattern, placeholder] : patterns) {
    std::regex re(pattern);
    out = std::regex_replace(out, re, placeholder);
  }
  return out;
}

PreprocessResult preprocess_corpus(const std::vector<Dialogue>& raw,
                                   const PreprocessRules& rules) {
  PreprocessResult result;
  for (const auto& d : raw) {
    if (d.turns.size() < rules.min_turns) {
      result.dropped.push_back({d.dialogue_id, "min_turns"});
      continue;
    }
    if (rules.language_predicate && !rules.language_predicate(d)) {
      result.dropped.push_back({d.dialogue_id, "language"});
      continue;
    }
    if (rules.min_upvotes) {
      auto it = d.metadata.find("upvotes");
      if (it != d.metadata.end() && std::stod(it->second) < *rules.min_upvotes) {
        result.dropped.push_back({d.dialogue_id, "upvotes"});
        continue;
      }
    }

    Dialogue cleaned = d;
    bool empty_turn = false;
    for (auto& t : cleaned.turns) {
      std::string text = t.text;
      if (rules.strip_symbols) text = strip_non_standard_symbols(text);
      if (rules.mask_pii) text = mask_pii(text, rules.pii_patterns);
      text = trim(text);
      if (text.empty()) {
        empty_turn = true;
        break;
      }
      t.text = text;
    }
    if (empty_turn) {
      result.dropped.push_back({d.dialogue_id, "empty_turn"});
      continue;
    }
    result.kept.push_back(std::move(cleaned));
  }
  return result;
}

// ---------------------------------------------------------------------------
// Agreement

double percent_agreement(const std::vector<std::vector<std::string>>& labels) {
  if (labels.size() < 2) throw ShapeError("percent_agreement needs >=2 annotators");
  size_t n_items = labels.front().size();
  if (n_items == 0) throw ShapeError("percent_agreement needs >=1 item");
  for (const auto& row : labels)
    if (row.size() != n_items)
      throw ShapeError("annotator label rows have mismatched lengths");
  size_t agree = 0;
  for (size_t i = 0; i < n_items; ++i) {
    bool all_same = true;
    for (size_t a = 1; a < labels.size(); ++a)
      if (labels[a][i] != labels[0][i]) {
        all_same = false;
        break;
      }
    if (all_same) ++agree;
  }
  return static_cast<double>(agree) / static_cast<double>(n_items);
}

double human_llm_accuracy(const std::vector<std::string>& human_gold,
                          const std::vector<std::string>& llm_labels) {
  if (human_gold.size() != llm_labels.size())
    throw ShapeError("human/llm label lists have mismatched lengths");
  if (human_gold.empty()) throw ShapeError("human_llm_accuracy needs >=1 item");
  size_t match = 0;
  for (size_t i = 0; i < human_gold.size(); ++i)
    if (human_gold[i] == llm_labels[i]) ++match;
  return static_cast<double>(match) / static_cast<double>(human_gold.size());
}

AgreementReport compute_agreement_report(
    const std::map<std::string, std::vector<std::vector<std::string>>>& annotator_labels,
    const std::map<std::string, std::pair<std::vector<std::string>,
                                          std::vector<std::string>>>& human_vs_llm) {
  AgreementReport report;
  for (const auto& [feature, matrix] : annotator_labels) {
    auto& entry = report.per_feature[feature];
    entry.iaa_percent_agreement = percent_agreement(matrix);
    entry.n = matrix.front().size();
  }
  for (const auto& [feature, pair] : human_vs_llm) {
    auto& entry = report.per_feature[feature];
    entry.human_llm_accuracy = human_llm_accuracy(pair.first, pair.second);
    if (entry.n == 0) entry.n = pair.first.size();
  }
  return report;
}

}  // namespace seekersim
