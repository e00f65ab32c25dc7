// Copyright 2026 The seekersim Authors
// SPDX-License-Identifier: Apache-2.0
//
// Token-level serialization of profiles and dialogues for the language
// model. One canonical layout shared by training, evaluation, and the
// session runner:
//
//   <bos> <profile> feature-tokens... problem-words... </profile>
//   <seeker> u0 <eot> <supporter> s1 <eot> ... <seeker> uk <eot>
//   <|end_of_dialogue|>
#pragma once

#include <string>
#include <vector>

#include "seekersim/profile.hpp"
#include "seekersim/tokenizer.hpp"

namespace seekersim {

inline int quantize_reaction(double v) {
  int q = static_cast<int>(std::lround(v * 4.0));
  return std::clamp(q, 0, 4);
}

// Conditioning block: one token per discrete feature, quantized reaction
// proportions, then the main-problem words that exist in the vocabulary.
inline std::vector<int> profile_block_tokens(const SeekerProfile& p,
                                             const Tokenizer& tok) {
  std::vector<int> out;
  out.push_back(tok.id(Tokenizer::kProfileOpen));
  auto put = [&](const std::string& s) { out.push_back(tok.id(s)); };
  put("coping=" + to_string(p.coping_strategy));
  put("style=" + to_string(p.utterance_style));
  put("resistance=" + to_string(p.resistance_level));
  put("engagement=" + to_string(p.engagement_level));
  put("disclosure=" + std::to_string(p.self_disclosure_level));
  put("react_pos=" + std::to_string(quantize_reaction(p.reaction_proportions.positive)));
  put("react_neu=" + std::to_string(quantize_reaction(p.reaction_proportions.neutral)));
  put("react_neg=" + std::to_string(quantize_reaction(p.reaction_proportions.negative)));
  put(std::string("profanity=") + (p.profanity_flag ? "true" : "false"));
  put("verbosity=" + to_string(p.verbosity_level));
  put("turns=" + to_string(p.total_turns_level));
  for (const auto& w : split_whitespace(p.main_problem))
    if (tok.contains(w)) out.push_back(tok.id(w));
  out.push_back(tok.id(Tokenizer::kProfileClose));
  return out;
}

inline std::vector<int> turn_tokens(const Turn& t, const Tokenizer& tok) {
  std::vector<int> out;
  out.push_back(t.role == Role::Seeker ? tok.seeker_id() : tok.supporter_id());
  for (int id : tok.encode(t.text)) out.push_back(id);
  out.push_back(tok.eot_id());
  return out;
}

// Prompt for generating the next seeker utterance: bos + profile block +
// as much recent history as fits + the <seeker> role tag. Oldest turns are
// dropped first when the budget is exceeded.
inline std::vector<int> seeker_prompt_tokens(const SeekerProfile& p,
                                             const std::vector<Turn>& history,
                                             const Tokenizer& tok, int max_tokens) {
  std::vector<int> head;
  head.push_back(tok.bos_id());
  auto block = profile_block_tokens(p, tok);
  head.insert(head.end(), block.begin(), block.end());

  std::vector<std::vector<int>> turns;
  turns.reserve(history.size());
  for (const auto& t : history) turns.push_back(turn_tokens(t, tok));

  size_t budget = static_cast<size_t>(max_tokens);
  size_t fixed = head.size() + 1;  // + trailing <seeker>
  expect(fixed <= budget, "prompt budget too small for the profile block");
  size_t start = 0;
  size_t hist_total = 0;
  for (const auto& t : turns) hist_total += t.size();
  while (start < turns.size() && fixed + hist_total > budget) {
    hist_total -= turns[start].size();
    ++start;
  }

  std::vector<int> out = std::move(head);
  for (size_t i = start; i < turns.size(); ++i)
    out.insert(out.end(), turns[i].begin(), turns[i].end());
  out.push_back(tok.seeker_id());
  return out;
}

}  // namespace seekersim
