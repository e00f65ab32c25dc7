// Copyright 2026 The seekersim Authors
// SPDX-License-Identifier: Apache-2.0

#include <doctest.h>

#include <random>

#include "oracles.hpp"
#include "seekersim/metrics.hpp"
#include "seekersim/synth.hpp"

using namespace seekersim;

TEST_CASE("macro F1 basics") {
  std::vector<std::string> labels = {"a", "b", "c"};
  CHECK(macro_f1({"a", "b", "c"}, {"a", "b", "c"}, labels) == 1.0);
  CHECK(macro_f1({"a", "a", "b", "b"}, {"a", "b", "a", "b"}, labels) ==
        doctest::Approx(0.5));
  CHECK_THROWS_AS(macro_f1({"a"}, {"a", "b"}, labels), ShapeError);
  CHECK_THROWS_AS(macro_f1({"z"}, {"a"}, labels), ValidationError);

  // Class absent from both sides is excluded from the mean.
  double with_c = macro_f1({"a", "b"}, {"a", "b"}, labels);
  CHECK(with_c == 1.0);
}

TEST_CASE("macro F1 agrees with the confusion-matrix oracle") {
  std::vector<std::string> labels = {"u", "v", "w", "x"};
  std::mt19937_64 rng(17);
  for (int trial = 0; trial < 300; ++trial) {
    size_t n = 1 + rng() % 10;
    std::vector<std::string> gold, pred;
    for (size_t i = 0; i < n; ++i) {
      gold.push_back(labels[rng() % labels.size()]);
      pred.push_back(labels[rng() % labels.size()]);
    }
    double ours = macro_f1(gold, pred, labels);
    double brute = oracle::macro_f1_brute(gold, pred, labels);
    CHECK(ours == brute);  // same arithmetic on integer counts
  }
  // All-one-class predictions on balanced 3-class gold.
  std::vector<std::string> gold = {"u", "u", "v", "v", "w", "w"};
  std::vector<std::string> pred(6, "u");
  CHECK(macro_f1(gold, pred, labels) ==
        oracle::macro_f1_brute(gold, pred, labels));
}

TEST_CASE("macro F1 invariances: renaming and permutation") {
  std::vector<std::string> labels = {"a", "b", "c"};
  std::vector<std::string> gold = {"a", "b", "a", "c", "b", "a"};
  std::vector<std::string> pred = {"a", "a", "b", "c", "b", "c"};
  double base = macro_f1(gold, pred, labels);

  auto rename = [](std::vector<std::string> v) {
    for (auto& s : v) s = (s == "a" ? "z" : s == "b" ? "y" : "x");
    return v;
  };
  CHECK(macro_f1(rename(gold), rename(pred), {"z", "y", "x"}) ==
        doctest::Approx(base));

  std::vector<size_t> perm = {3, 1, 5, 0, 2, 4};
  std::vector<std::string> pg, pp;
  for (size_t i : perm) {
    pg.push_back(gold[i]);
    pp.push_back(pred[i]);
  }
  CHECK(macro_f1(pg, pp, labels) == doctest::Approx(base));
}

TEST_CASE("distinct-n values and oracle agreement") {
  CHECK(distinct_n({"a b a b"}, 2) == doctest::Approx(2.0 / 3.0));
  CHECK(distinct_n({"q w e r t y"}, 1) == 1.0);
  CHECK(distinct_n({"k k k k"}, 1) == doctest::Approx(0.25));
  CHECK_THROWS_AS(distinct_n({"a b"}, 3), ShapeError);
  CHECK_THROWS_AS(distinct_n({}, 1), Error);

  std::mt19937_64 rng(5);
  std::vector<std::string> words = {"an", "be", "ce", "do", "el"};
  for (int trial = 0; trial < 100; ++trial) {
    std::vector<std::string> texts;
    size_t n_texts = 1 + rng() % 5;
    for (size_t i = 0; i < n_texts; ++i) {
      std::string t;
      size_t len = 2 + rng() % 8;
      for (size_t k = 0; k < len; ++k) {
        if (k) t.push_back(' ');
        t += words[rng() % words.size()];
      }
      texts.push_back(t);
    }
    for (int n = 1; n <= 2; ++n)
      CHECK(distinct_n(texts, n) == oracle::distinct_n_brute(texts, n));
  }
}

TEST_CASE("self-BLEU endpoints") {
  // Identical texts score 1.
  CHECK(self_bleu({"a b c d e", "a b c d e", "a b c d e"}, 4) ==
        doctest::Approx(1.0));
  // Disjoint vocabularies fall to the smoothing floor (~1/len at
  // dialogue-scale lengths).
  {
    std::string t1, t2;
    for (int i = 0; i < 30; ++i) {
      t1 += "a" + std::to_string(i) + " ";
      t2 += "b" + std::to_string(i) + " ";
    }
    CHECK(self_bleu({t1, t2}, 4) < 0.05);
  }
  // Half-shared unigrams with equal lengths (no brevity penalty), max_n=1.
  CHECK(self_bleu({"a b c d", "a b x y"}, 1) == doctest::Approx(0.5));
  CHECK_THROWS_AS(self_bleu({"only one"}, 4), Error);
  // Lower similarity, lower score.
  double hi = self_bleu({"a b c d", "a b c e"}, 2);
  double lo = self_bleu({"a b c d", "a e f g"}, 2);
  CHECK(hi > lo);
  CHECK(hi <= 1.0);
  CHECK(lo >= 0.0);
}

TEST_CASE("token repetition values and oracle agreement") {
  auto r = token_repetition_mean({"a a b"});
  CHECK(r.mean == doctest::Approx(1.0 / 3.0));
  CHECK(token_repetition_mean({"x y z"}).mean == 0.0);
  CHECK(token_repetition_mean({"w w w w"}).mean == doctest::Approx(0.75));

  auto mixed = token_repetition_mean({"a a b", "", "c c"});
  CHECK(mixed.n_excluded == 1);
  CHECK(mixed.n_texts == 2);

  std::mt19937_64 rng(7);
  std::vector<std::string> words = {"m", "n", "o"};
  for (int trial = 0; trial < 100; ++trial) {
    std::vector<std::string> texts;
    for (size_t i = 0; i < 1 + rng() % 4; ++i) {
      std::string t;
      for (size_t k = 0; k < 1 + rng() % 9; ++k) {
        if (k) t.push_back(' ');
        t += words[rng() % 3];
      }
      texts.push_back(t);
    }
    CHECK(token_repetition_mean(texts).mean ==
          oracle::token_repetition_brute(texts));
  }
}

TEST_CASE("semantic diversity endpoints and the APD+ACS identity") {
  VecD a = VecD::Zero(4), b = VecD::Zero(4);
  a[0] = 1.0;
  b[1] = 1.0;
  auto same = semantic_diversity({a, a});
  CHECK(same.apd == doctest::Approx(0.0));
  CHECK(same.acs == doctest::Approx(1.0));
  auto ortho = semantic_diversity({a, b});
  CHECK(ortho.apd == doctest::Approx(1.0));
  CHECK(ortho.acs == doctest::Approx(0.0));
  CHECK_THROWS_AS(semantic_diversity({a}), Error);

  std::mt19937_64 rng(21);
  std::normal_distribution<double> dist;
  for (int trial = 0; trial < 50; ++trial) {
    std::vector<VecD> embs;
    size_t n = 2 + rng() % 8;
    for (size_t i = 0; i < n; ++i) {
      VecD v(8);
      for (int k = 0; k < 8; ++k) v[k] = dist(rng);
      embs.push_back(v / v.norm());
    }
    auto sd = semantic_diversity(embs);
    CHECK(std::abs(sd.apd + sd.acs - 1.0) <= 1e-9);
  }

  // Reference diversity rows: APD and ACS are complements by definition.
  const double rows[][2] = {
      {0.6767, 0.3233}, {0.7012, 0.2988}, {0.5543, 0.4457}, {0.7433, 0.2567}};
  for (const auto& row : rows)
    CHECK(std::abs(row[0] + row[1] - 1.0) <= 1e-9);
}

TEST_CASE("hashed bag-of-words embedder is deterministic and unit norm") {
  HashedBowEmbedder emb(64, 9);
  auto a = emb.embed("it was a long day at work");
  auto b = emb.embed("it was a long day at work");
  CHECK(a == b);
  CHECK(a.norm() == doctest::Approx(1.0).epsilon(1e-9));
  CHECK(emb.embed("").norm() == doctest::Approx(1.0));
  auto c = emb.embed("completely different words entirely");
  CHECK((a - c).norm() > 1e-3);
}

TEST_CASE("sentiment stats endpoints") {
  struct Fixed : SentimentScorer {
    double v;
    explicit Fixed(double v) : v(v) {}
    double compound(const std::string&) const override { return v; }
  };
  auto s = sentiment_stats({"x", "y", "z"}, Fixed(0.4));
  CHECK(s.mean == doctest::Approx(0.4));
  CHECK(s.stdev == doctest::Approx(0.0));

  struct Alternating : SentimentScorer {
    double compound(const std::string& t) const override {
      return t == "pos" ? 1.0 : -1.0;
    }
  };
  auto t = sentiment_stats({"pos", "neg"}, Alternating());
  CHECK(t.mean == doctest::Approx(0.0));
  CHECK(t.stdev == doctest::Approx(1.0));

  struct Flaky : SentimentScorer {
    double compound(const std::string& t) const override {
      if (t == "bad") throw std::runtime_error("boom");
      return 0.25;
    }
  };
  auto u = sentiment_stats({"ok", "bad", "ok"}, Flaky());
  CHECK(u.n == 2);
  CHECK(u.n_excluded == 1);

  LexiconSentimentScorer lex;
  CHECK(lex.compound("i love this great day") > 0.5);
  CHECK(lex.compound("terrible awful sad") < -0.5);
  CHECK(lex.compound("the chair is brown") == doctest::Approx(0.0));
}

TEST_CASE("hull coverage: squares, triangles, and failure modes") {
  auto square = ExternalCoordinates({{0, 0}, {1, 0}, {1, 1}, {0, 1}});
  std::vector<VecD> dummy(4, VecD::Zero(2));
  auto hc = hull_coverage(dummy, square);
  CHECK(hc.area == doctest::Approx(1.0));
  CHECK_FALSE(hc.degenerate);

  auto tri = ExternalCoordinates({{0, 0}, {1, 0}, {0, 1}});
  std::vector<VecD> dummy3(3, VecD::Zero(2));
  CHECK(hull_coverage(dummy3, tri).area == doctest::Approx(0.5));

  auto line = ExternalCoordinates({{0, 0}, {1, 1}, {2, 2}, {3, 3}});
  auto degen = hull_coverage(dummy, line);
  CHECK(degen.area == 0.0);
  CHECK(degen.degenerate);

  auto two = ExternalCoordinates({{0, 0}, {1, 1}});
  std::vector<VecD> dummy2(2, VecD::Zero(2));
  CHECK_THROWS_AS(hull_coverage(dummy2, two), Error);
}

TEST_CASE("hull area matches the O(n^3) brute force exactly") {
  std::mt19937_64 rng(31);
  std::uniform_real_distribution<double> coord(-3.0, 3.0);
  for (int trial = 0; trial < 200; ++trial) {
    size_t n = 3 + rng() % 8;
    std::vector<Point2> pts;
    for (size_t i = 0; i < n; ++i) pts.push_back({coord(rng), coord(rng)});
    double fast = polygon_area(convex_hull(pts));
    double brute = oracle::hull_area_brute(pts);
    CHECK(fast == brute);
  }
}

TEST_CASE("hull area invariances: permutation, translation, scaling") {
  std::mt19937_64 rng(41);
  std::uniform_real_distribution<double> coord(-2.0, 2.0);
  std::vector<Point2> pts;
  for (int i = 0; i < 9; ++i) pts.push_back({coord(rng), coord(rng)});
  double base = polygon_area(convex_hull(pts));

  auto shuffled = pts;
  std::shuffle(shuffled.begin(), shuffled.end(), rng);
  CHECK(polygon_area(convex_hull(shuffled)) == doctest::Approx(base));

  auto moved = pts;
  for (auto& p : moved) {
    p.x += 11.5;
    p.y -= 3.25;
  }
  CHECK(polygon_area(convex_hull(moved)) == doctest::Approx(base));

  auto scaled = pts;
  for (auto& p : scaled) {
    p.x *= 2.5;
    p.y *= 2.5;
  }
  CHECK(polygon_area(convex_hull(scaled)) == doctest::Approx(base * 2.5 * 2.5));
}

TEST_CASE("PCA projection recovers planar structure") {
  // Points on a plane embedded in R^6: hull area is preserved.
  std::mt19937_64 rng(51);
  std::uniform_real_distribution<double> coord(-1.0, 1.0);
  VecD u = VecD::Zero(6), v = VecD::Zero(6);
  u[1] = 1.0;
  v[4] = 1.0;
  std::vector<Point2> plane = {{0, 0}, {2, 0}, {2, 1}, {0, 1}, {1, 0.5}};
  std::vector<VecD> embs;
  for (const auto& p : plane) embs.push_back(p.x * u + p.y * v);
  auto hc = hull_coverage(embs, PcaProjector());
  CHECK(hc.area == doctest::Approx(2.0));
  CHECK_FALSE(hc.degenerate);
}

TEST_CASE("judge orchestration shapes the ten-metric table") {
  CHECK(judge_metrics().size() == 10);
  size_t grouped = 0;
  for (const auto& [g, ms] : judge_metric_groups()) grouped += ms.size();
  CHECK(grouped == 10);

  std::vector<Dialogue> dialogues;
  for (int i = 0; i < 4; ++i) {
    Dialogue d;
    d.dialogue_id = "j" + std::to_string(i);
    d.turns = {{Role::Seeker, "hi", 0}, {Role::Supporter, "hello", 1}};
    d.metadata["supporter"] = i < 2 ? "model_a" : "model_b";
    dialogues.push_back(d);
  }

  struct Fives : JudgeBackend {
    int score(const Dialogue&, const std::string&) const override { return 5; }
  };
  auto table = judge_supporter(dialogues, Fives());
  CHECK(table.n_dialogues == 4);
  for (const auto& supporter : {"model_a", "model_b"})
    for (const auto& m : judge_metrics())
      CHECK(table.means.at(supporter).at(m) == doctest::Approx(5.0));

  struct ByIndex : JudgeBackend {
    int score(const Dialogue&, const std::string& metric) const override {
      const auto& ms = judge_metrics();
      auto it = std::find(ms.begin(), ms.end(), metric);
      return static_cast<int>((it - ms.begin()) % 5) + 1;
    }
  };
  auto t2 = judge_supporter(dialogues, ByIndex());
  CHECK(t2.means.at("model_a").at("Identification") == doctest::Approx(1.0));
  CHECK(t2.means.at("model_a").at("Informativeness") == doctest::Approx(5.0));
  CHECK(t2.means.at("model_b").at("Overall") == doctest::Approx(5.0));

  struct Broken : JudgeBackend {
    int score(const Dialogue&, const std::string& metric) const override {
      if (metric == "Humanness") throw std::runtime_error("no parse");
      return 3;
    }
  };
  auto t3 = judge_supporter(dialogues, Broken(), 1);
  CHECK(t3.missing.at("model_a").at("Humanness") == 2);
  CHECK(t3.means.at("model_a").count("Humanness") == 0);
  CHECK(t3.means.at("model_a").at("Overall") == doctest::Approx(3.0));
}

TEST_CASE("adherence: identity retagger scores 1 everywhere") {
  auto spec = GeneratorSpec::defaults(61, 40);
  auto corpus = generate_corpus(spec);
  auto report = adherence_eval(corpus.dialogues, [&](const Dialogue& d) {
    return oracle_tag(d, spec, /*strict=*/true);
  });
  CHECK(report.n_dialogues == 40);
  CHECK(report.n_excluded == 0);
  CHECK(report.mean == doctest::Approx(1.0));
  CHECK(report.min == doctest::Approx(1.0));
  CHECK(report.stdev == doctest::Approx(0.0));
  for (const auto& [name, score] : report.per_feature) {
    CHECK(score.f1 == doctest::Approx(1.0));
    CHECK(score.acc == doctest::Approx(1.0));
  }
}

TEST_CASE("adherence aggregation row matches hand arithmetic") {
  auto spec = GeneratorSpec::defaults(71, 30);
  auto corpus = generate_corpus(spec);
  // Break exactly one feature: report coping as problem_focused everywhere.
  auto report = adherence_eval(corpus.dialogues, [&](const Dialogue& d) {
    auto p = oracle_tag(d, spec, /*strict=*/true);
    p.coping_strategy = CopingStrategy::ProblemFocused;
    return p;
  });
  std::vector<double> f1s;
  for (const auto& [name, score] : report.per_feature) f1s.push_back(score.f1);
  REQUIRE(f1s.size() == 8);
  double mean = 0;
  for (double v : f1s) mean += v;
  mean /= 8.0;
  double var = 0;
  for (double v : f1s) var += (v - mean) * (v - mean);
  CHECK(report.mean == doctest::Approx(mean));
  CHECK(report.stdev == doctest::Approx(std::sqrt(var / 8.0)));
  CHECK(report.min == doctest::Approx(*std::min_element(f1s.begin(), f1s.end())));
  CHECK(report.max == doctest::Approx(*std::max_element(f1s.begin(), f1s.end())));
  CHECK(report.per_feature.at("coping_strategy").f1 < 1.0);
  CHECK(report.per_feature.at("verbosity_level").f1 == doctest::Approx(1.0));
  // Ordinal features carry correlations; perfect features have r == 1.
  CHECK(report.per_feature.at("verbosity_level").pearson_r.has_value());
  CHECK(*report.per_feature.at("verbosity_level").pearson_r == doctest::Approx(1.0));
}

TEST_CASE("retagger failures exclude dialogues but are counted") {
  auto spec = GeneratorSpec::defaults(81, 10);
  auto corpus = generate_corpus(spec);
  int called = 0;
  auto report = adherence_eval(corpus.dialogues, [&](const Dialogue& d) {
    if (++called % 5 == 0) throw std::runtime_error("tagger down");
    return oracle_tag(d, spec, true);
  });
  CHECK(report.n_dialogues == 8);
  CHECK(report.n_excluded == 2);
}

TEST_CASE("diversity report composes all metrics") {
  auto spec = GeneratorSpec::defaults(91, 25);
  auto corpus = generate_corpus(spec);
  std::vector<std::string> texts;
  for (const auto& d : corpus.dialogues) texts.push_back(seeker_text(d));
  HashedBowEmbedder emb(64);
  LexiconSentimentScorer sent;
  PcaProjector pca;
  auto report = diversity_report(texts, emb, sent, pca);
  CHECK(report.distinct_1 > 0.0);
  CHECK(report.distinct_1 <= 1.0);
  CHECK(report.distinct_2 >= report.distinct_1 * 0.5);
  CHECK(report.self_bleu_score > 0.0);
  CHECK(report.self_bleu_score <= 1.0);
  CHECK(report.repetition.mean >= 0.0);
  CHECK(report.repetition.mean < 1.0);
  CHECK(std::abs(report.semantic.apd + report.semantic.acs - 1.0) <= 1e-9);
  CHECK(report.hull.area > 0.0);
}
