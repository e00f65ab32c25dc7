// Copyright 2026 The seekersim Authors
// SPDX-License-Identifier: Apache-2.0

#include "seekersim/profile.hpp"

#include <algorithm>
#include <cmath>

namespace seekersim {

namespace {

constexpr double kReactionSumTol = 1e-9;

const std::vector<std::string> kCopingNames = {
    "problem_focused", "emotion_processing", "avoidant", "maladaptive_behavior"};
const std::vector<std::string> kStyleNames = {"plain", "upset", "verbose"};
const std::vector<std::string> kLevel3Names = {"low", "medium", "high"};
const std::vector<std::string> kReactionNames = {"positive", "neutral", "negative"};
const std::vector<std::string> kDisclosureNames = {"1", "2", "3", "4"};
const std::vector<std::string> kVerbosityNames = {
    "very_short", "short", "medium", "long", "very_long"};
const std::vector<std::string> kTurnsNames = {"short", "medium", "long"};
const std::vector<std::string> kProfanityNames = {"false", "true"};

int index_of(const std::vector<std::string>& names, const std::string& s,
             const std::string& field) {
  auto it = std::find(names.begin(), names.end(), s);
  if (it == names.end())
    throw ValidationError("unknown value '" + s + "' for field '" + field + "'");
  return static_cast<int>(it - names.begin());
}

// First whitespace token of `s`, lowercased, with trailing punctuation removed.
std::string first_token_lower(const std::string& s) {
  auto toks = split_whitespace(s);
  if (toks.empty()) return "";
  std::string t = to_lower(toks.front());
  while (!t.empty() && (t.back() == ',' || t.back() == '.' || t.back() == ';'))
    t.pop_back();
  return t;
}

}  // namespace

std::string to_string(CopingStrategy v) { return kCopingNames[static_cast<int>(v)]; }
std::string to_string(UtteranceStyle v) { return kStyleNames[static_cast<int>(v)]; }
std::string to_string(Level3 v) { return kLevel3Names[static_cast<int>(v)]; }
std::string to_string(Reaction v) { return kReactionNames[static_cast<int>(v)]; }
std::string to_string(VerbosityLevel v) { return kVerbosityNames[static_cast<int>(v)]; }
std::string to_string(TurnsLevel v) { return kTurnsNames[static_cast<int>(v)]; }

std::string to_string(Feature f) {
  switch (f) {
    case Feature::Coping: return "coping_strategy";
    case Feature::Style: return "utterance_style";
    case Feature::Resistance: return "resistance_level";
    case Feature::Engagement: return "engagement_level";
    case Feature::SelfDisclosure: return "self_disclosure_level";
    case Feature::Reaction: return "reaction";
    case Feature::Profanity: return "profanity_flag";
    case Feature::Verbosity: return "verbosity_level";
    case Feature::Turns: return "total_turns_level";
  }
  return "?";
}

CopingStrategy coping_from_string(const std::string& s) {
  return static_cast<CopingStrategy>(index_of(kCopingNames, s, "coping_strategy"));
}
UtteranceStyle style_from_string(const std::string& s) {
  return static_cast<UtteranceStyle>(index_of(kStyleNames, s, "utterance_style"));
}
Level3 level3_from_string(const std::string& s, const std::string& field) {
  return static_cast<Level3>(index_of(kLevel3Names, s, field));
}
Reaction reaction_from_string(const std::string& s) {
  return static_cast<Reaction>(index_of(kReactionNames, s, "reaction"));
}
VerbosityLevel verbosity_from_string(const std::string& s) {
  return static_cast<VerbosityLevel>(index_of(kVerbosityNames, s, "verbosity_level"));
}
TurnsLevel turns_from_string(const std::string& s) {
  return static_cast<TurnsLevel>(index_of(kTurnsNames, s, "total_turns_level"));
}

const std::vector<std::string>& feature_categories(Feature f) {
  switch (f) {
    case Feature::Coping: return kCopingNames;
    case Feature::Style: return kStyleNames;
    case Feature::Resistance: return kLevel3Names;
    case Feature::Engagement: return kLevel3Names;
    case Feature::SelfDisclosure: return kDisclosureNames;
    case Feature::Reaction: return kReactionNames;
    case Feature::Profanity: return kProfanityNames;
    case Feature::Verbosity: return kVerbosityNames;
    case Feature::Turns: return kTurnsNames;
  }
  return kCopingNames;
}

bool feature_is_ordinal(Feature f) {
  switch (f) {
    case Feature::Resistance:
    case Feature::Engagement:
    case Feature::SelfDisclosure:
    case Feature::Verbosity:
    case Feature::Turns:
      return true;
    default:
      return false;
  }
}

const std::vector<Feature>& all_features() {
  static const std::vector<Feature> fs = {
      Feature::Coping,       Feature::Style,     Feature::Resistance,
      Feature::Engagement,   Feature::SelfDisclosure, Feature::Reaction,
      Feature::Profanity,    Feature::Verbosity, Feature::Turns};
  return fs;
}

std::string SeekerProfile::label(Feature f) const {
  switch (f) {
    case Feature::Coping: return to_string(coping_strategy);
    case Feature::Style: return to_string(utterance_style);
    case Feature::Resistance: return to_string(resistance_level);
    case Feature::Engagement: return to_string(engagement_level);
    case Feature::SelfDisclosure: return std::to_string(self_disclosure_level);
    case Feature::Profanity: return profanity_flag ? "true" : "false";
    case Feature::Verbosity: return to_string(verbosity_level);
    case Feature::Turns: return to_string(total_turns_level);
    case Feature::Reaction:
      throw Error("reaction proportions have no single label");
  }
  return "?";
}

std::vector<Violation> validate_profile(const SeekerProfile& p) {
  std::vector<Violation> out;
  const auto& rp = p.reaction_proportions;
  for (auto [name, v] : {std::pair<const char*, double>{"positive", rp.positive},
                         {"neutral", rp.neutral},
                         {"negative", rp.negative}}) {
    if (!(v >= 0.0 && v <= 1.0))
      out.push_back({std::string("reaction_proportions.") + name,
                     "must lie in [0,1]"});
  }
  if (std::abs(rp.sum() - 1.0) > kReactionSumTol)
    out.push_back({"reaction_proportions", "must sum to 1"});
  if (p.self_disclosure_level < kSelfDisclosureMin ||
      p.self_disclosure_level > kSelfDisclosureMax)
    out.push_back({"self_disclosure_level", "must be in 1..4"});

  if (trim(p.main_problem).empty()) {
    out.push_back({"main_problem", "must be non-empty"});
  } else {
    if (p.main_problem.rfind("problem:", 0) != 0) {
      out.push_back({"main_problem", "must begin with \"problem:\""});
    } else {
      static const std::vector<std::string> kFirstPerson = {
          "i", "i'm", "im", "i've", "ive", "me", "my", "mine", "we", "our"};
      std::string rest = p.main_problem.substr(8);
      std::string tok = first_token_lower(rest);
      if (std::find(kFirstPerson.begin(), kFirstPerson.end(), tok) !=
          kFirstPerson.end())
        out.push_back({"main_problem", "must be third person"});
    }
  }
  return out;
}

// ---------------------------------------------------------------------------
// Dialogue

std::string to_string(Role r) { return r == Role::Seeker ? "seeker" : "supporter"; }

std::string to_string(TerminationReason t) {
  switch (t) {
    case TerminationReason::EndToken: return "end_token";
    case TerminationReason::ClosingExchange: return "closing_exchange";
    case TerminationReason::TurnCap: return "turn_cap";
    case TerminationReason::Exhausted: return "exhausted";
  }
  return "?";
}

Role role_from_string(const std::string& s) {
  if (s == "seeker") return Role::Seeker;
  if (s == "supporter") return Role::Supporter;
  throw ValidationError("unknown value '" + s + "' for field 'role'");
}

TerminationReason termination_from_string(const std::string& s) {
  if (s == "end_token") return TerminationReason::EndToken;
  if (s == "closing_exchange") return TerminationReason::ClosingExchange;
  if (s == "turn_cap") return TerminationReason::TurnCap;
  if (s == "exhausted") return TerminationReason::Exhausted;
  throw ValidationError("unknown value '" + s + "' for field 'terminated_by'");
}

size_t Dialogue::seeker_turn_count() const {
  size_t n = 0;
  for (const auto& t : turns)
    if (t.role == Role::Seeker) ++n;
  return n;
}

std::vector<Violation> validate_dialogue(const Dialogue& d) {
  std::vector<Violation> out;
  if (d.turns.empty()) {
    out.push_back({"turns", "must be non-empty"});
    return out;
  }
  if (d.turns.front().role != Role::Seeker)
    out.push_back({"turns[0].role", "turn 0 must be a seeker turn"});
  for (size_t i = 0; i < d.turns.size(); ++i) {
    if (trim(d.turns[i].text).empty())
      out.push_back({"turns[" + std::to_string(i) + "].text", "must be non-empty"});
    if (i > 0 && d.turns[i].role == d.turns[i - 1].role)
      out.push_back({"turns[" + std::to_string(i) + "].role",
                     "roles must strictly alternate"});
  }
  return out;
}

// ---------------------------------------------------------------------------
// Feature vector

double zero_centered_scalar(int k, int num_levels) {
  expect(num_levels >= 2, "ordinal feature needs at least two levels");
  expect(k >= 0 && k < num_levels, "ordinal level out of range");
  return -1.0 + 2.0 * k / (num_levels - 1);
}

namespace {

struct SegmentSpec {
  const char* name;
  int size;
};

constexpr SegmentSpec kCanonicalSegments[] = {
    {"coping", 4},      {"style", 3},           {"reaction", 3},
    {"resistance", 1},  {"engagement", 1},      {"self_disclosure", 1},
    {"verbosity", 1},
};

int ordinal_from_scalar(double v, int num_levels) {
  int best = 0;
  double best_d = 1e300;
  for (int k = 0; k < num_levels; ++k) {
    double d = std::abs(v - zero_centered_scalar(k, num_levels));
    if (d < best_d) {
      best_d = d;
      best = k;
    }
  }
  return best;
}

int argmax_segment(const VecD& values, const FeatureSegment& seg) {
  int best = 0;
  for (int i = 1; i < seg.size; ++i)
    if (values[seg.offset + i] > values[seg.offset + best]) best = i;
  return best;
}

}  // namespace

FeatureVectorLayout FeatureVectorLayout::defaults() {
  std::vector<std::string> order;
  for (const auto& s : kCanonicalSegments) order.push_back(s.name);
  return with_order(order);
}

FeatureVectorLayout FeatureVectorLayout::with_order(
    const std::vector<std::string>& order) {
  constexpr int kN = static_cast<int>(std::size(kCanonicalSegments));
  if (static_cast<int>(order.size()) != kN)
    throw ValidationError("feature-vector layout must list all 7 segments");
  FeatureVectorLayout out;
  int offset = 0;
  for (const auto& name : order) {
    const SegmentSpec* spec = nullptr;
    for (const auto& s : kCanonicalSegments)
      if (name == s.name) spec = &s;
    if (!spec) throw ValidationError("unknown feature segment '" + name + "'");
    for (const auto& existing : out.segments)
      if (existing.name == name)
        throw ValidationError("duplicate feature segment '" + name + "'");
    out.segments.push_back({name, offset, spec->size});
    offset += spec->size;
  }
  return out;
}

int FeatureVectorLayout::dim() const {
  int d = 0;
  for (const auto& s : segments) d += s.size;
  return d;
}

const FeatureSegment& FeatureVectorLayout::segment(const std::string& name) const {
  for (const auto& s : segments)
    if (s.name == name) return s;
  throw Error("no feature segment named '" + name + "'");
}

FeatureVector encode_feature_vector(const SeekerProfile& p) {
  return encode_feature_vector(p, FeatureVectorLayout::defaults());
}

FeatureVector encode_feature_vector(const SeekerProfile& p,
                                    const FeatureVectorLayout& layout) {
  auto violations = validate_profile(p);
  if (!violations.empty())
    throw ValidationError("invalid profile: field '" + violations.front().field +
                          "': " + violations.front().rule);

  FeatureVector fv;
  fv.layout = layout;
  fv.values = VecD::Zero(layout.dim());

  auto put_onehot = [&](const std::string& name, int index) {
    const auto& seg = layout.segment(name);
    fv.values[seg.offset + index] = 1.0;
  };
  auto put_scalar = [&](const std::string& name, double v) {
    const auto& seg = layout.segment(name);
    fv.values[seg.offset] = v;
  };

  put_onehot("coping", static_cast<int>(p.coping_strategy));
  put_onehot("style", static_cast<int>(p.utterance_style));

  const auto& rseg = layout.segment("reaction");
  fv.values[rseg.offset + 0] = p.reaction_proportions.positive;
  fv.values[rseg.offset + 1] = p.reaction_proportions.neutral;
  fv.values[rseg.offset + 2] = p.reaction_proportions.negative;

  put_scalar("resistance", zero_centered_scalar(static_cast<int>(p.resistance_level), 3));
  put_scalar("engagement", zero_centered_scalar(static_cast<int>(p.engagement_level), 3));
  put_scalar("self_disclosure",
             zero_centered_scalar(p.self_disclosure_level - kSelfDisclosureMin, 4));
  put_scalar("verbosity", zero_centered_scalar(static_cast<int>(p.verbosity_level), 5));
  return fv;
}

DecodedFeatures decode_feature_vector(const FeatureVector& fv) {
  const auto& layout = fv.layout;
  expect(fv.values.size() == layout.dim(), "feature vector / layout size mismatch");

  DecodedFeatures out{};
  out.coping_strategy = static_cast<CopingStrategy>(
      argmax_segment(fv.values, layout.segment("coping")));
  out.utterance_style = static_cast<UtteranceStyle>(
      argmax_segment(fv.values, layout.segment("style")));

  const auto& rseg = layout.segment("reaction");
  out.reaction_proportions = {fv.values[rseg.offset + 0], fv.values[rseg.offset + 1],
                              fv.values[rseg.offset + 2]};

  auto scalar = [&](const std::string& name) {
    return fv.values[layout.segment(name).offset];
  };
  out.resistance_level = static_cast<Level3>(ordinal_from_scalar(scalar("resistance"), 3));
  out.engagement_level = static_cast<Level3>(ordinal_from_scalar(scalar("engagement"), 3));
  out.self_disclosure_level =
      kSelfDisclosureMin + ordinal_from_scalar(scalar("self_disclosure"), 4);
  out.verbosity_level =
      static_cast<VerbosityLevel>(ordinal_from_scalar(scalar("verbosity"), 5));
  return out;
}

std::vector<Violation> validate_feature_vector(const FeatureVector& fv) {
  std::vector<Violation> out;
  if (fv.values.size() != kFeatureVectorDim)
    out.push_back({"values", "length must be 14"});
  if (fv.values.size() != fv.layout.dim()) {
    out.push_back({"layout", "layout dim does not match values"});
    return out;
  }
  for (const auto& seg : fv.layout.segments) {
    auto block = fv.values.segment(seg.offset, seg.size);
    if (seg.name == "coping" || seg.name == "style") {
      int ones = 0;
      for (int i = 0; i < seg.size; ++i) {
        if (block[i] == 1.0) ++ones;
        else if (block[i] != 0.0)
          out.push_back({seg.name, "one-hot entries must be 0 or 1"});
      }
      if (ones != 1) out.push_back({seg.name, "one-hot must contain exactly one 1"});
    } else if (seg.name == "reaction") {
      if (std::abs(block.sum() - 1.0) > 1e-9)
        out.push_back({seg.name, "reaction segment must sum to 1"});
      for (int i = 0; i < seg.size; ++i)
        if (!(block[i] >= 0.0 && block[i] <= 1.0))
          out.push_back({seg.name, "reaction entries must lie in [0,1]"});
    } else {
      if (!(block[0] >= -1.0 && block[0] <= 1.0))
        out.push_back({seg.name, "scalar must lie in [-1,1]"});
    }
  }
  return out;
}

}  // namespace seekersim
