// Copyright 2026 The seekersim Authors
// SPDX-License-Identifier: Apache-2.0

#include "seekersim/synth.hpp"

#include <algorithm>
#include <random>
#include <set>

namespace seekersim {

namespace {

using Rng = std::mt19937_64;

int rand_int(Rng& rng, int lo, int hi) {  // inclusive
  return lo + static_cast<int>(rng() % static_cast<uint64_t>(hi - lo + 1));
}

template <typename T>
const T& choice(Rng& rng, const std::vector<T>& v) {
  return v[rng() % v.size()];
}

std::string join(const std::vector<std::string>& words) {
  std::string out;
  for (size_t i = 0; i < words.size(); ++i) {
    if (i) out.push_back(' ');
    out += words[i];
  }
  return out;
}

}  // namespace

GeneratorSpec GeneratorSpec::defaults(uint64_t seed, int n_dialogues) {
  GeneratorSpec s;
  s.seed = seed;
  s.n_dialogues = n_dialogues;

  s.coping_bank = {
      {"problem_focused", {"plan", "steps", "options", "research", "organize"}},
      {"emotion_processing", {"feelings", "crying", "tears", "heart", "emotions"}},
      {"avoidant", {"ignore", "escape", "distract", "postpone", "avoid"}},
      {"maladaptive_behavior", {"drinking", "binge", "relapse", "reckless", "numbing"}},
  };
  s.style_bank = {
      {"plain", {"simply", "plainly", "directly", "briefly", "clearly"}},
      {"upset", {"furious", "angry", "unfair", "hate", "outraged"}},
      {"verbose", {"moreover", "furthermore", "additionally", "elaborate", "extensively"}},
  };
  s.resistance_bank = {
      {"low", {"agreeable", "willing", "receptive", "cooperative"}},
      {"medium", {"hesitant", "unsure", "ambivalent", "wavering"}},
      {"high", {"refuse", "pointless", "resist", "doubtful"}},
  };
  s.engagement_bank = {
      {"low", {"shrug", "indifferent", "detached", "disengaged"}},
      {"medium", {"sometimes", "partly", "occasionally", "selectively"}},
      {"high", {"curious", "invested", "eager", "proactive"}},
  };
  s.disclosure_bank = {
      {"1", {"smalltalk", "weather", "routine", "generic"}},
      {"2", {"facts", "details", "context", "background"}},
      {"3", {"fears", "vulnerable", "ashamed", "painful"}},
      {"4", {"identity", "core", "existential", "worldview"}},
  };
  s.reaction_bank = {
      {"positive", {"thanks", "helpful", "appreciated", "agreed"}},
      {"neutral", {"noted", "perhaps", "alright", "anyway"}},
      {"negative", {"useless", "wrong", "nope", "dismissive"}},
  };
  s.profanity_lexicon = {"damn", "hell", "crap", "dang", "freaking"};
  s.topics = {"school",   "exams",  "job",    "family", "marriage", "health",
              "money",    "friends", "moving", "breakup", "deadlines", "neighbors"};
  s.supporter_bank = {"hear",    "listening", "understand", "beside",  "gently",
                      "breathe", "present",   "comfort",    "patience", "warmth",
                      "kindness", "encourage", "acknowledge", "company", "steady"};

  s.filler_bank = {
      "i",       "my",      "me",       "we",       "the",      "a",
      "an",      "and",     "or",       "but",      "so",       "to",
      "of",      "in",      "on",       "at",       "by",       "for",
      "from",    "into",    "over",     "under",    "about",    "after",
      "before",  "again",   "always",   "often",    "rarely",   "today",
      "tomorrow", "morning", "evening", "night",    "week",     "month",
      "year",    "day",     "moment",   "thing",    "things",   "stuff",
      "part",    "kind",    "sort",     "bit",      "lot",      "way",
      "place",   "home",    "room",     "outside",  "inside",   "people",
      "person",  "someone", "everyone", "nobody",   "friend",   "class",
      "lesson",  "task",    "goal",     "idea",     "question", "answer",
      "reason",  "because", "maybe",    "really",   "very",     "quite",
      "pretty",  "almost",  "nearly",   "just",     "still",    "yet",
      "already", "even",    "only",     "also",     "too",      "then",
      "now",     "later",   "soon",     "once",     "twice",    "first",
      "second",  "next",    "last",     "new",      "old",      "good",
      "bad",     "better",  "worse",    "hard",     "easy",     "small",
      "big",     "heavy",   "light",    "dark",     "bright",   "warm",
      "cold",    "tired",   "awake",    "busy",     "free",     "open",
      "closed",  "same",    "different", "certain", "clear",    "quiet",
      "loud",    "slow",    "fast",     "early",    "late",     "deep",
      "think",   "thought", "know",     "knew",     "feel",     "felt",
      "want",    "wanted",  "need",     "needed",   "try",      "tried",
      "keep",    "kept",    "start",    "started",  "stop",     "stopped",
      "stay",    "stayed",  "leave",    "left",     "come",     "came",
      "went",    "make",    "made",     "took",     "give",     "gave",
      "get",     "got",     "put",      "say",      "said",     "talk",
      "talked",  "told",    "ask",      "asked",    "called",   "see",
      "saw",     "look",    "looked",   "watch",    "watched",  "read",
      "wrote",   "walk",    "walked",   "ran",      "sit",      "sat",
      "stand",   "stood",   "rest",     "rested",   "cook",     "cooked",
      "clean",   "cleaned", "play",     "played",   "wait",     "waited",
      "hope",    "hoped",   "wish",     "wished",   "miss",     "missed",
      "love",    "loved",   "like",     "liked",    "enjoy",    "enjoyed",
      "laugh",   "laughed", "smile",    "smiled",   "worry",    "worried",
      "stress",  "stressed", "calm",    "calmer",   "nervous",  "anxious",
      "afraid",  "scared",  "brave",    "proud",    "guilty",   "embarrassed",
      "alone",   "together", "apart",   "near",     "far",      "close",
      "distant", "slept",   "woke",     "dream",    "dreamt",   "quietly",
      "slowly",  "quickly", "somehow",  "anywhere", "nowhere",  "somewhere",
  };
  return s;
}

namespace {

void check_disjoint(std::map<std::string, std::set<std::string>>& seen,
                    const std::string& group, const std::vector<std::string>& words) {
  for (const auto& w : words) {
    for (auto& [other_group, other] : seen) {
      if (other.count(w))
        throw ValidationError("vocabulary word '" + w + "' appears in both " +
                              other_group + " and " + group);
    }
    seen[group].insert(w);
  }
}

const std::vector<std::pair<std::string, int>>& quantized_reaction_tokens() {
  static const std::vector<std::pair<std::string, int>> names = {
      {"react_pos", 0}, {"react_neu", 1}, {"react_neg", 2}};
  return names;
}

}  // namespace

void GeneratorSpec::validate() const {
  expect(n_dialogues > 0, "n_dialogues must be positive");
  std::map<std::string, std::set<std::string>> seen;
  auto check_bank = [&](const std::string& name,
                        const std::map<std::string, std::vector<std::string>>& bank,
                        Feature feature) {
    const auto& cats = feature_categories(feature);
    expect(bank.size() == cats.size(), name + " must cover every category");
    for (const auto& c : cats) {
      auto it = bank.find(c);
      expect(it != bank.end() && !it->second.empty(),
             name + " is missing category '" + c + "'");
      check_disjoint(seen, name + "/" + c, it->second);
    }
  };
  check_bank("coping_bank", coping_bank, Feature::Coping);
  check_bank("style_bank", style_bank, Feature::Style);
  check_bank("resistance_bank", resistance_bank, Feature::Resistance);
  check_bank("engagement_bank", engagement_bank, Feature::Engagement);
  check_bank("disclosure_bank", disclosure_bank, Feature::SelfDisclosure);
  check_bank("reaction_bank", reaction_bank, Feature::Reaction);
  check_disjoint(seen, "profanity", profanity_lexicon);
  check_disjoint(seen, "topics", topics);
  check_disjoint(seen, "supporter", supporter_bank);
  check_disjoint(seen, "filler", filler_bank);

  // Length ranges (with jitter) must sit inside the extraction bins.
  extraction.check();
  const auto& bins = extraction.verbosity_bins;
  for (int level = 0; level < 5; ++level) {
    const auto& r = length_ranges[static_cast<size_t>(level)];
    expect(r.lo <= r.hi, "length range inverted");
    double lo = r.lo - length_jitter, hi = r.hi + length_jitter;
    if (level > 0) expect(lo >= bins[level - 1], "length range crosses bin edge");
    if (level < 4) expect(hi < bins[level], "length range crosses bin edge");
  }
  for (const auto& [level, counts] : turn_counts) {
    expect(!counts.empty(), "turn_counts entry empty");
    for (int c : counts) {
      expect(c >= 5 && c % 2 == 1, "turn counts must be odd and >=5");
      expect(bin_turns(c, extraction) == level, "turn count outside its bin");
    }
  }
}

Tokenizer build_vocabulary(const GeneratorSpec& spec) {
  spec.validate();
  std::vector<std::string> vocab = Tokenizer::special_tokens();
  auto add = [&](const std::vector<std::string>& words) {
    for (const auto& w : words) vocab.push_back(w);
  };
  auto add_bank = [&](const std::map<std::string, std::vector<std::string>>& bank,
                      Feature f) {
    for (const auto& c : feature_categories(f)) add(bank.at(c));
  };
  add(spec.topics);
  add_bank(spec.coping_bank, Feature::Coping);
  add_bank(spec.style_bank, Feature::Style);
  add_bank(spec.resistance_bank, Feature::Resistance);
  add_bank(spec.engagement_bank, Feature::Engagement);
  add_bank(spec.disclosure_bank, Feature::SelfDisclosure);
  add_bank(spec.reaction_bank, Feature::Reaction);
  add(spec.profanity_lexicon);

  // Profile-conditioning tokens.
  for (Feature f : {Feature::Coping, Feature::Style, Feature::Resistance,
                    Feature::Engagement, Feature::SelfDisclosure,
                    Feature::Profanity, Feature::Verbosity, Feature::Turns}) {
    std::string prefix;
    switch (f) {
      case Feature::Coping: prefix = "coping="; break;
      case Feature::Style: prefix = "style="; break;
      case Feature::Resistance: prefix = "resistance="; break;
      case Feature::Engagement: prefix = "engagement="; break;
      case Feature::SelfDisclosure: prefix = "disclosure="; break;
      case Feature::Profanity: prefix = "profanity="; break;
      case Feature::Verbosity: prefix = "verbosity="; break;
      case Feature::Turns: prefix = "turns="; break;
      default: break;
    }
    for (const auto& c : feature_categories(f)) vocab.push_back(prefix + c);
  }
  for (const auto& [name, idx] : quantized_reaction_tokens())
    for (int q = 0; q <= 4; ++q)
      vocab.push_back(name + "=" + std::to_string(q));

  add(spec.supporter_bank);
  add(spec.filler_bank);
  return Tokenizer(std::move(vocab));
}

std::string main_problem_for_topic(const std::string& topic) {
  return "problem: the seeker struggles with " + topic + " and feels stuck.";
}

namespace {

struct DialoguePlan {
  SeekerProfile profile;
  std::string topic;
  int total_turns = 5;
  std::vector<Reaction> reactions;      // one per non-first seeker turn
  std::vector<int> disclosure_scores;   // aligned with reactions
  std::vector<int> seeker_lengths;      // aligned with reactions
};

DialoguePlan plan_dialogue(const GeneratorSpec& spec, int index, Rng& rng) {
  DialoguePlan plan;
  auto& p = plan.profile;

  int coping, style, resistance, engagement, verbosity, turns, profanity, dominant;
  if (spec.sampler == GeneratorSpec::Sampler::Stratified) {
    // Features that shape training difficulty cycle fastest so even small
    // corpora stay balanced.
    int i = index;
    coping = i % 4; i /= 4;
    verbosity = i % 5; i /= 5;
    turns = i % 3; i /= 3;
    profanity = i % 2; i /= 2;
    style = i % 3; i /= 3;
    resistance = i % 3; i /= 3;
    engagement = i % 3; i /= 3;
    dominant = i % 3;
  } else {
    coping = rand_int(rng, 0, 3);
    style = rand_int(rng, 0, 2);
    resistance = rand_int(rng, 0, 2);
    engagement = rand_int(rng, 0, 2);
    verbosity = rand_int(rng, 0, 4);
    turns = rand_int(rng, 0, 2);
    profanity = rand_int(rng, 0, 1);
    dominant = rand_int(rng, 0, 2);
  }
  p.coping_strategy = static_cast<CopingStrategy>(coping);
  p.utterance_style = static_cast<UtteranceStyle>(style);
  p.resistance_level = static_cast<Level3>(resistance);
  p.engagement_level = static_cast<Level3>(engagement);
  p.verbosity_level = static_cast<VerbosityLevel>(verbosity);
  p.total_turns_level = static_cast<TurnsLevel>(turns);
  p.profanity_flag = profanity == 1;

  plan.topic = choice(rng, spec.topics);
  p.main_problem = main_problem_for_topic(plan.topic);
  plan.total_turns = choice(rng, spec.turn_counts.at(p.total_turns_level));

  int n_followups = (plan.total_turns + 1) / 2 - 1;
  for (int t = 0; t < n_followups; ++t) {
    int r = rand_int(rng, 0, 9) < 6 ? dominant : rand_int(rng, 0, 2);
    plan.reactions.push_back(static_cast<Reaction>(r));
  }
  p.reaction_proportions = aggregate_reactions(plan.reactions);

  int base = rand_int(rng, 1, 4);
  for (int t = 0; t < n_followups; ++t) {
    int s = base;
    if (rand_int(rng, 0, 9) >= 7)
      s = std::clamp(base + (rng() % 2 == 0 ? 1 : -1), kSelfDisclosureMin,
                     kSelfDisclosureMax);
    plan.disclosure_scores.push_back(s);
  }
  p.self_disclosure_level = aggregate_self_disclosure(plan.disclosure_scores);

  const auto& range = spec.length_ranges[static_cast<size_t>(verbosity)];
  int base_len = rand_int(rng, range.lo, range.hi);
  for (int t = 0; t < n_followups; ++t)
    plan.seeker_lengths.push_back(
        base_len + rand_int(rng, -spec.length_jitter, spec.length_jitter));
  return plan;
}

std::vector<std::string> compose_seeker_turn(const GeneratorSpec& spec,
                                             const DialoguePlan& plan, int followup,
                                             Rng& rng) {
  const auto& p = plan.profile;
  std::vector<std::string> words;
  words.push_back(choice(rng, spec.coping_bank.at(to_string(p.coping_strategy))));
  words.push_back(choice(rng, spec.style_bank.at(to_string(p.utterance_style))));
  words.push_back(choice(rng, spec.resistance_bank.at(to_string(p.resistance_level))));
  words.push_back(choice(rng, spec.engagement_bank.at(to_string(p.engagement_level))));
  words.push_back(choice(
      rng, spec.disclosure_bank.at(std::to_string(plan.disclosure_scores[followup]))));
  words.push_back(choice(
      rng, spec.reaction_bank.at(to_string(plan.reactions[followup]))));
  if (p.profanity_flag) words.push_back(choice(rng, spec.profanity_lexicon));

  int target = plan.seeker_lengths[followup];
  while (static_cast<int>(words.size()) < target)
    words.push_back(choice(rng, spec.filler_bank));
  std::shuffle(words.begin(), words.end(), rng);
  return words;
}

}  // namespace

SynthCorpus generate_corpus(const GeneratorSpec& spec) {
  spec.validate();
  SynthCorpus corpus;
  corpus.tokenizer = build_vocabulary(spec);

  for (int i = 0; i < spec.n_dialogues; ++i) {
    Rng rng(derive_seed(spec.seed, static_cast<uint64_t>(i)));
    DialoguePlan plan = plan_dialogue(spec, i, rng);

    Dialogue d;
    {
      char buf[64];
      std::snprintf(buf, sizeof(buf), "synth-%llu-%05d",
                    static_cast<unsigned long long>(spec.seed), i);
      d.dialogue_id = buf;
    }
    d.profile = plan.profile;
    d.metadata["split"] = (i % 10 == 8) ? "val" : (i % 10 == 9) ? "test" : "train";
    d.metadata["topic"] = plan.topic;

    // Opening turn: the original post. Exactly one topic token, padded with
    // fillers; not counted toward verbosity.
    {
      std::vector<std::string> words;
      int len = rand_int(rng, spec.opening_length.lo, spec.opening_length.hi);
      words.push_back(plan.topic);
      while (static_cast<int>(words.size()) < len)
        words.push_back(choice(rng, spec.filler_bank));
      std::shuffle(words.begin(), words.end(), rng);
      d.turns.push_back({Role::Seeker, join(words), 0});
    }

    int followup = 0;
    for (int t = 1; t < plan.total_turns; ++t) {
      if (t % 2 == 1) {
        std::vector<std::string> words;
        int len = rand_int(rng, spec.supporter_length.lo, spec.supporter_length.hi);
        for (int w = 0; w < len; ++w)
          words.push_back(choice(rng, spec.supporter_bank));
        d.turns.push_back({Role::Supporter, join(words), t});
      } else {
        d.turns.push_back(
            {Role::Seeker, join(compose_seeker_turn(spec, plan, followup, rng)), t});
        ++followup;
      }
    }
    d.terminated_by = TerminationReason::EndToken;
    corpus.dialogues.push_back(std::move(d));
  }
  return corpus;
}

// ---------------------------------------------------------------------------
// Oracle tagger

namespace {

// Categories of `bank` whose words occur in `tokens`, with multiplicity.
std::vector<std::string> find_markers(
    const std::vector<std::string>& tokens,
    const std::map<std::string, std::vector<std::string>>& bank) {
  std::vector<std::string> found;
  for (const auto& tok : tokens)
    for (const auto& [category, words] : bank)
      if (std::find(words.begin(), words.end(), tok) != words.end())
        found.push_back(category);
  return found;
}

std::string majority(const std::vector<std::string>& found,
                     const std::vector<std::string>& categories) {
  int best = -1, best_count = 0;
  for (size_t c = 0; c < categories.size(); ++c) {
    int count = static_cast<int>(
        std::count(found.begin(), found.end(), categories[c]));
    if (count > best_count) {
      best_count = count;
      best = static_cast<int>(c);
    }
  }
  return best < 0 ? categories.front() : categories[static_cast<size_t>(best)];
}

std::string tag_dialogue_feature(
    const std::vector<std::vector<std::string>>& seeker_followups,
    const std::map<std::string, std::vector<std::string>>& bank,
    const std::vector<std::string>& categories, const std::string& name,
    bool strict) {
  std::vector<std::string> found;
  for (const auto& turn : seeker_followups) {
    auto turn_found = find_markers(turn, bank);
    if (strict && turn_found.size() != 1)
      throw ExtractionError("not a synthetic dialogue: expected exactly one " +
                            name + " marker per seeker turn, found " +
                            std::to_string(turn_found.size()));
    found.insert(found.end(), turn_found.begin(), turn_found.end());
  }
  if (strict) {
    std::set<std::string> distinct(found.begin(), found.end());
    if (distinct.size() != 1)
      throw ExtractionError("not a synthetic dialogue: conflicting " + name +
                            " markers");
    return *distinct.begin();
  }
  return majority(found, categories);
}

}  // namespace

SeekerProfile oracle_tag(const Dialogue& d, const GeneratorSpec& spec, bool strict) {
  spec.validate();
  SeekerProfile p;

  std::vector<std::vector<std::string>> followups;  // non-first seeker turns
  std::vector<std::string> opening;
  bool first_seeker_seen = false;
  for (const auto& t : d.turns) {
    if (t.role != Role::Seeker) continue;
    auto toks = split_whitespace(t.text);
    if (!first_seeker_seen) {
      first_seeker_seen = true;
      opening = std::move(toks);
    } else {
      followups.push_back(std::move(toks));
    }
  }
  if (strict && followups.empty())
    throw ExtractionError("not a synthetic dialogue: no follow-up seeker turns");

  p.coping_strategy = coping_from_string(tag_dialogue_feature(
      followups, spec.coping_bank, feature_categories(Feature::Coping),
      "coping", strict));
  p.utterance_style = style_from_string(tag_dialogue_feature(
      followups, spec.style_bank, feature_categories(Feature::Style), "style",
      strict));
  p.resistance_level = level3_from_string(
      tag_dialogue_feature(followups, spec.resistance_bank,
                           feature_categories(Feature::Resistance), "resistance",
                           strict),
      "resistance_level");
  p.engagement_level = level3_from_string(
      tag_dialogue_feature(followups, spec.engagement_bank,
                           feature_categories(Feature::Engagement), "engagement",
                           strict),
      "engagement_level");

  // Turn-level markers.
  std::vector<Reaction> reactions;
  std::vector<int> scores;
  for (const auto& turn : followups) {
    auto r = find_markers(turn, spec.reaction_bank);
    auto s = find_markers(turn, spec.disclosure_bank);
    if (strict && (r.size() != 1 || s.size() != 1))
      throw ExtractionError(
          "not a synthetic dialogue: missing turn-level markers");
    if (!r.empty())
      reactions.push_back(reaction_from_string(
          majority(r, feature_categories(Feature::Reaction))));
    if (!s.empty())
      scores.push_back(std::stoi(
          majority(s, feature_categories(Feature::SelfDisclosure))));
  }
  p.reaction_proportions =
      reactions.empty() ? ReactionProportions{0.0, 1.0, 0.0}
                        : aggregate_reactions(reactions);
  p.self_disclosure_level = scores.empty() ? 1 : aggregate_self_disclosure(scores);

  // Linguistic features via the rule extractor.
  if (strict) {
    p.verbosity_level = extract_verbosity_level(d, spec.extraction);
    p.total_turns_level = extract_turns_level(d, spec.extraction);
  } else {
    double total = 0.0;
    size_t n = 0;
    for (const auto& turn : followups) {
      total += static_cast<double>(turn.size());
      ++n;
    }
    if (n == 0 && !opening.empty()) {
      total = static_cast<double>(opening.size());
      n = 1;
    }
    p.verbosity_level = n == 0 ? VerbosityLevel::VeryShort
                               : bin_verbosity(total / static_cast<double>(n),
                                               spec.extraction);
    p.total_turns_level =
        bin_turns(static_cast<int>(d.turns.size()), spec.extraction);
  }
  WordListProfanityScorer profanity(spec.profanity_lexicon);
  p.profanity_flag = detect_profanity(d, profanity, spec.extraction);

  // Main problem from the opening topic token.
  std::vector<std::string> topic_hits;
  for (const auto& tok : opening)
    if (std::find(spec.topics.begin(), spec.topics.end(), tok) != spec.topics.end())
      topic_hits.push_back(tok);
  if (strict && topic_hits.size() != 1)
    throw ExtractionError("not a synthetic dialogue: opening must carry one topic");
  p.main_problem = main_problem_for_topic(
      topic_hits.empty() ? spec.topics.front() : topic_hits.front());
  return p;
}

}  // namespace seekersim
