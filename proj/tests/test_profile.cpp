// Copyright 2026 The seekersim Authors
// SPDX-License-Identifier: Apache-2.0

#include <doctest.h>

#include <filesystem>
#include <random>

#include "seekersim/io.hpp"
#include "seekersim/profile.hpp"

using namespace seekersim;

namespace {

SeekerProfile example_profile() {
  // Mirrors the running example: an emotion-processing seeker with high
  // resistance and uniformly negative reactions.
  SeekerProfile p;
  p.coping_strategy = CopingStrategy::EmotionProcessing;
  p.utterance_style = UtteranceStyle::Upset;
  p.resistance_level = Level3::High;
  p.engagement_level = Level3::High;
  p.self_disclosure_level = 2;
  p.reaction_proportions = {0.0, 0.0, 1.0};
  p.profanity_flag = true;
  p.verbosity_level = VerbosityLevel::Medium;
  p.total_turns_level = TurnsLevel::Long;
  p.main_problem =
      "problem: The seeker is struggling with feelings of failure after not "
      "being accepted into medical school, despite strong academic credentials.";
  return p;
}

}  // namespace

TEST_CASE("taxonomy has exactly nine features with the expected categories") {
  CHECK(all_features().size() == 9);
  CHECK(feature_categories(Feature::Coping) ==
        std::vector<std::string>{"problem_focused", "emotion_processing",
                                 "avoidant", "maladaptive_behavior"});
  CHECK(feature_categories(Feature::Style) ==
        std::vector<std::string>{"plain", "upset", "verbose"});
  CHECK(feature_categories(Feature::SelfDisclosure) ==
        std::vector<std::string>{"1", "2", "3", "4"});
  CHECK(feature_categories(Feature::Verbosity) ==
        std::vector<std::string>{"very_short", "short", "medium", "long",
                                 "very_long"});
  CHECK(feature_categories(Feature::Turns) ==
        std::vector<std::string>{"short", "medium", "long"});
  CHECK(feature_is_ordinal(Feature::Resistance));
  CHECK(feature_is_ordinal(Feature::Verbosity));
  CHECK_FALSE(feature_is_ordinal(Feature::Coping));
}

TEST_CASE("validate_profile accepts the example profile") {
  CHECK(validate_profile(example_profile()).empty());
}

TEST_CASE("validate_profile reports reaction proportions not summing to 1") {
  auto p = example_profile();
  p.reaction_proportions = {0.5, 0.5, 0.5};
  auto v = validate_profile(p);
  REQUIRE(v.size() == 1);
  CHECK(v[0].field == "reaction_proportions");
}

TEST_CASE("validate_profile reports out-of-range self-disclosure") {
  auto p = example_profile();
  p.self_disclosure_level = 5;
  auto v = validate_profile(p);
  REQUIRE(v.size() == 1);
  CHECK(v[0].field == "self_disclosure_level");
}

TEST_CASE("validate_profile rejects first-person and missing-prefix problems") {
  auto p = example_profile();
  p.main_problem = "problem: I failed my exams.";
  auto v = validate_profile(p);
  REQUIRE(v.size() == 1);
  CHECK(v[0].rule == "must be third person");

  p.main_problem = "The seeker failed.";
  v = validate_profile(p);
  REQUIRE(v.size() == 1);
  CHECK(v[0].field == "main_problem");

  p.main_problem = "";
  CHECK(validate_profile(p).size() == 1);
}

TEST_CASE("zero-centered scalar endpoints and midpoints") {
  CHECK(zero_centered_scalar(0, 3) == doctest::Approx(-1.0));
  CHECK(zero_centered_scalar(1, 3) == doctest::Approx(0.0));
  CHECK(zero_centered_scalar(2, 3) == doctest::Approx(1.0));
  CHECK(zero_centered_scalar(0, 4) == doctest::Approx(-1.0));
  CHECK(zero_centered_scalar(3, 4) == doctest::Approx(1.0));
}

TEST_CASE("encode_feature_vector produces the documented 14-dim layout") {
  auto p = example_profile();
  auto fv = encode_feature_vector(p);
  REQUIRE(fv.values.size() == kFeatureVectorDim);
  CHECK(validate_feature_vector(fv).empty());

  // coping one-hot x4 | style one-hot x3 | reaction x3 | 4 scalars
  CHECK(fv.values[1] == 1.0);  // emotion_processing
  CHECK(fv.values[0] == 0.0);
  CHECK(fv.values[5] == 1.0);  // upset
  CHECK(fv.values[7] == 0.0);  // positive ratio
  CHECK(fv.values[9] == 1.0);  // negative ratio
  CHECK(fv.values[10] == doctest::Approx(1.0));        // resistance high
  CHECK(fv.values[11] == doctest::Approx(1.0));        // engagement high
  CHECK(fv.values[12] == doctest::Approx(-1.0 / 3.0)); // disclosure 2 of 1..4
  CHECK(fv.values[13] == doctest::Approx(0.0));        // verbosity medium
}

TEST_CASE("encoding rejects invalid profiles naming the field") {
  auto p = example_profile();
  p.reaction_proportions = {0.9, 0.3, 0.1};
  CHECK_THROWS_AS(encode_feature_vector(p), ValidationError);
}

TEST_CASE("encode/decode round trip over the full category grid") {
  const std::vector<ReactionProportions> reaction_grid = {
      {1.0, 0.0, 0.0}, {0.0, 1.0, 0.0},        {0.0, 0.0, 1.0},
      {0.5, 0.25, 0.25}, {0.25, 0.5, 0.25},
  };
  size_t checked = 0;
  for (int coping = 0; coping < 4; ++coping)
    for (int style = 0; style < 3; ++style)
      for (int res = 0; res < 3; ++res)
        for (int eng = 0; eng < 3; ++eng)
          for (int dis = 1; dis <= 4; ++dis)
            for (int verb = 0; verb < 5; ++verb)
              for (int turns = 0; turns < 3; ++turns)
                for (int prof = 0; prof < 2; ++prof)
                  for (const auto& rp : reaction_grid) {
                    SeekerProfile p;
                    p.coping_strategy = static_cast<CopingStrategy>(coping);
                    p.utterance_style = static_cast<UtteranceStyle>(style);
                    p.resistance_level = static_cast<Level3>(res);
                    p.engagement_level = static_cast<Level3>(eng);
                    p.self_disclosure_level = dis;
                    p.verbosity_level = static_cast<VerbosityLevel>(verb);
                    p.total_turns_level = static_cast<TurnsLevel>(turns);
                    p.profanity_flag = prof == 1;
                    p.reaction_proportions = rp;
                    p.main_problem = "problem: The seeker worries.";
                    auto dec = decode_feature_vector(encode_feature_vector(p));
                    REQUIRE(dec.coping_strategy == p.coping_strategy);
                    REQUIRE(dec.utterance_style == p.utterance_style);
                    REQUIRE(dec.resistance_level == p.resistance_level);
                    REQUIRE(dec.engagement_level == p.engagement_level);
                    REQUIRE(dec.self_disclosure_level == p.self_disclosure_level);
                    REQUIRE(dec.verbosity_level == p.verbosity_level);
                    REQUIRE(dec.reaction_proportions == p.reaction_proportions);
                    ++checked;
                  }
  CHECK(checked == 4u * 3 * 3 * 3 * 4 * 5 * 3 * 2 * reaction_grid.size());
}

TEST_CASE("layout can be reordered without changing decode results") {
  auto layout = FeatureVectorLayout::with_order(
      {"verbosity", "reaction", "coping", "style", "self_disclosure",
       "engagement", "resistance"});
  auto p = example_profile();
  auto fv = encode_feature_vector(p, layout);
  CHECK(fv.values.size() == 14);
  CHECK(fv.values[0] == doctest::Approx(0.0));  // verbosity medium leads
  auto dec = decode_feature_vector(fv);
  CHECK(dec.coping_strategy == p.coping_strategy);
  CHECK(dec.verbosity_level == p.verbosity_level);

  CHECK_THROWS_AS(FeatureVectorLayout::with_order({"coping"}), ValidationError);
  CHECK_THROWS_AS(FeatureVectorLayout::with_order(
                      {"coping", "coping", "reaction", "style",
                       "self_disclosure", "engagement", "resistance"}),
                  ValidationError);
}

TEST_CASE("dialogue invariants: seeker first, strict alternation, non-empty") {
  Dialogue d;
  d.dialogue_id = "d0";
  d.turns = {{Role::Seeker, "hello", 0}, {Role::Supporter, "hi", 1},
             {Role::Seeker, "ok", 2}};
  CHECK(validate_dialogue(d).empty());

  d.turns[0].role = Role::Supporter;
  CHECK_FALSE(validate_dialogue(d).empty());

  d.turns[0].role = Role::Seeker;
  d.turns[1].role = Role::Seeker;
  CHECK_FALSE(validate_dialogue(d).empty());

  d.turns[1].role = Role::Supporter;
  d.turns[2].text = "   ";
  CHECK_FALSE(validate_dialogue(d).empty());
}

TEST_CASE("dialogue JSONL round trip is bit-exact") {
  Dialogue d;
  d.dialogue_id = "rt-1";
  d.turns = {{Role::Seeker, "problem: exams", 0},
             {Role::Supporter, "tell me more", 1},
             {Role::Seeker, "it is a lot", 2}};
  d.profile = example_profile();
  d.profile->reaction_proportions = {1.0 / 3.0, 1.0 / 3.0, 1.0 - 2.0 / 3.0};
  d.terminated_by = TerminationReason::TurnCap;
  d.metadata["upvotes"] = "12";

  auto path = std::filesystem::temp_directory_path() / "seekersim_rt.jsonl";
  write_dialogues_jsonl(path, {d});
  auto first = read_text_file(path);
  auto back = read_dialogues_jsonl(path);
  REQUIRE(back.size() == 1);
  CHECK(back[0].dialogue_id == d.dialogue_id);
  CHECK(back[0].profile == d.profile);
  CHECK(back[0].terminated_by == d.terminated_by);
  CHECK(back[0].metadata == d.metadata);
  REQUIRE(back[0].turns.size() == d.turns.size());
  for (size_t i = 0; i < d.turns.size(); ++i) {
    CHECK(back[0].turns[i].role == d.turns[i].role);
    CHECK(back[0].turns[i].text == d.turns[i].text);
  }

  // Serializing the parsed dialogue again reproduces the same bytes.
  write_dialogues_jsonl(path, back);
  CHECK(read_text_file(path) == first);
  std::filesystem::remove(path);
}

TEST_CASE("encode is deterministic and injective on the encoded features") {
  std::mt19937 rng(7);
  auto p = example_profile();
  auto a = encode_feature_vector(p);
  auto b = encode_feature_vector(p);
  CHECK(a.values == b.values);

  // Flipping any single encoded feature changes the vector.
  auto q = p;
  q.coping_strategy = CopingStrategy::Avoidant;
  CHECK(encode_feature_vector(q).values != a.values);
  q = p;
  q.self_disclosure_level = 3;
  CHECK(encode_feature_vector(q).values != a.values);
  q = p;
  q.verbosity_level = VerbosityLevel::VeryLong;
  CHECK(encode_feature_vector(q).values != a.values);
}
