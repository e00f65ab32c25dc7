// Copyright 2026 The seekersim Authors
// SPDX-License-Identifier: Apache-2.0
//
// Canonical data model: seeker profiles, dialogues, and the routing
// feature-vector encoding. All types here are immutable values.
#pragma once

#include <array>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "seekersim/common.hpp"

namespace seekersim {

// ---------------------------------------------------------------------------
// Feature taxonomy

enum class CopingStrategy { ProblemFocused, EmotionProcessing, Avoidant, MaladaptiveBehavior };
enum class UtteranceStyle { Plain, Upset, Verbose };
enum class Level3 { Low, Medium, High };  // resistance, engagement
enum class Reaction { Positive, Neutral, Negative };
enum class VerbosityLevel { VeryShort, Short, Medium, Long, VeryLong };
enum class TurnsLevel { Short, Medium, Long };

enum class Feature {
  Coping,
  Style,
  Resistance,
  Engagement,
  SelfDisclosure,
  Reaction,
  Profanity,
  Verbosity,
  Turns,
};

inline constexpr int kNumFeatures = 9;
inline constexpr int kSelfDisclosureMin = 1;
inline constexpr int kSelfDisclosureMax = 4;

std::string to_string(CopingStrategy v);
std::string to_string(UtteranceStyle v);
std::string to_string(Level3 v);
std::string to_string(Reaction v);
std::string to_string(VerbosityLevel v);
std::string to_string(TurnsLevel v);
std::string to_string(Feature f);

// Parsers throw ValidationError naming the field on unknown values.
CopingStrategy coping_from_string(const std::string& s);
UtteranceStyle style_from_string(const std::string& s);
Level3 level3_from_string(const std::string& s, const std::string& field);
Reaction reaction_from_string(const std::string& s);
VerbosityLevel verbosity_from_string(const std::string& s);
TurnsLevel turns_from_string(const std::string& s);

// Category lists per feature, in canonical order. Ordinal features carry a
// total order equal to their list order.
const std::vector<std::string>& feature_categories(Feature f);
bool feature_is_ordinal(Feature f);
const std::vector<Feature>& all_features();

// ---------------------------------------------------------------------------
// SeekerProfile

struct ReactionProportions {
  double positive = 0.0;
  double neutral = 0.0;
  double negative = 0.0;

  double sum() const { return positive + neutral + negative; }
  bool operator==(const ReactionProportions&) const = default;
};

// The nine annotated features plus the main-problem summary.
struct SeekerProfile {
  CopingStrategy coping_strategy = CopingStrategy::ProblemFocused;
  UtteranceStyle utterance_style = UtteranceStyle::Plain;
  Level3 resistance_level = Level3::Low;
  Level3 engagement_level = Level3::Low;
  int self_disclosure_level = 1;  // 1..4
  ReactionProportions reaction_proportions{1.0, 0.0, 0.0};
  bool profanity_flag = false;
  VerbosityLevel verbosity_level = VerbosityLevel::Medium;
  TurnsLevel total_turns_level = TurnsLevel::Short;
  std::string main_problem;  // must begin with "problem:"

  bool operator==(const SeekerProfile&) const = default;

  // Categorical/ordinal label string for a feature (Reaction is excluded:
  // it is a distribution, not a single label).
  std::string label(Feature f) const;
};

struct Violation {
  std::string field;
  std::string rule;
};

// Reports every invariant breach; empty result means the profile is valid.
std::vector<Violation> validate_profile(const SeekerProfile& p);

// ---------------------------------------------------------------------------
// Dialogue

enum class Role { Seeker, Supporter };
enum class TerminationReason { EndToken, ClosingExchange, TurnCap, Exhausted };

std::string to_string(Role r);
std::string to_string(TerminationReason t);
Role role_from_string(const std::string& s);
TerminationReason termination_from_string(const std::string& s);

struct Turn {
  Role role = Role::Seeker;
  std::string text;
  int index = 0;
};

struct Dialogue {
  std::string dialogue_id;
  std::vector<Turn> turns;
  std::optional<SeekerProfile> profile;
  std::optional<TerminationReason> terminated_by;
  std::map<std::string, std::string> metadata;

  size_t seeker_turn_count() const;
};

// Checks turn 0 is a seeker turn, strict role alternation, and non-empty
// turn text:
std::vector<Violation> validate_dialogue(const Dialogue& d);

// ---------------------------------------------------------------------------
// Routing feature vector
//
// 14-dim layout: coping one-hot (4) | style one-hot (3) | reaction
// proportions (3) | resistance, engagement, self-disclosure, verbosity as
// zero-centered scalars (4). Profanity and total-turns are not routed; they
// condition the generation prompt and termination instead. The segment order
// is overridable via FeatureVectorLayout.

struct FeatureSegment {
  std::string name;
  int offset = 0;
  int size = 0;
};

struct FeatureVectorLayout {
  std::vector<FeatureSegment> segments;

  static FeatureVectorLayout defaults();
  // Reorders the canonical segments; `order` must be a permutation of the
  // seven canonical segment names.
  static FeatureVectorLayout with_order(const std::vector<std::string>& order);

  int dim() const;
  const FeatureSegment& segment(const std::string& name) const;
};

struct FeatureVector {
  VecD values;
  FeatureVectorLayout layout;
};

inline constexpr int kFeatureVectorDim = 14;

// Ordinal level k of K maps to -1 + 2k/(K-1).
double zero_centered_scalar(int k, int num_levels);

FeatureVector encode_feature_vector(const SeekerProfile& p);
FeatureVector encode_feature_vector(const SeekerProfile& p,
                                    const FeatureVectorLayout& layout);

// The seven routed features recovered from a vector; used for round-trip
// checks (profanity and turns are not represented).
struct DecodedFeatures {
  CopingStrategy coping_strategy;
  UtteranceStyle utterance_style;
  ReactionProportions reaction_proportions;
  Level3 resistance_level;
  Level3 engagement_level;
  int self_disclosure_level;
  VerbosityLevel verbosity_level;
};

DecodedFeatures decode_feature_vector(const FeatureVector& fv);

// One-hot/scalar/simplex segment invariants for an encoded vector.
std::vector<Violation> validate_feature_vector(const FeatureVector& fv);

}  // namespace seekersim
