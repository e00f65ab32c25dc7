// Copyright 2026 The seekersim Authors
// SPDX-License-Identifier: Apache-2.0
//
// Profile-adherence scoring, the diversity metric suite, and supporter
// quality judging. All metric functions are pure: same inputs, bit-identical
// outputs.
#pragma once

#include <functional>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "seekersim/common.hpp"
#include "seekersim/profile.hpp"

namespace seekersim {

// ---------------------------------------------------------------------------
// Classification metrics

// Unweighted mean of per-class F1. Classes absent from both gold and
// prediction are excluded from the mean; classes that appear anywhere
// contribute their F1 (0 when degenerate).
double macro_f1(const std::vector<std::string>& gold,
                const std::vector<std::string>& predicted,
                const std::vector<std::string>& label_set);

double accuracy(const std::vector<std::string>& gold,
                const std::vector<std::string>& predicted);

// Pearson correlation of two equal-length series; nullopt when either side
// has zero variance.
std::optional<double> pearson(const std::vector<double>& a,
                              const std::vector<double>& b);

// ---------------------------------------------------------------------------
// Adherence

struct FeatureScore {
  double f1 = 0;
  double acc = 0;
  std::optional<double> pearson_r;  // ordinal features only
};

struct AdherenceReport {
  std::map<std::string, FeatureScore> per_feature;
  double mean = 0, stdev = 0, min = 0, max = 0;  // across per-feature F1
  size_t n_dialogues = 0;
  size_t n_excluded = 0;  // retagger failures
};

// Re-extracts features from each dialogue with `retagger` and compares them
// to the input profile. Dialogues whose retagging throws are excluded and
// counted.
AdherenceReport adherence_eval(
    const std::vector<Dialogue>& dialogues,
    const std::function<SeekerProfile(const Dialogue&)>& retagger);

// The eight features adherence is scored on (reaction proportions are a
// distribution, not a label).
const std::vector<Feature>& adherence_features();

// ---------------------------------------------------------------------------
// Lexical diversity

// |unique n-grams| / |total n-grams| across all texts (whitespace tokens).
double distinct_n(const std::vector<std::string>& texts, int n);

// Mean over texts of corpus-style BLEU against all other texts as
// references: modified n-gram precision with clipping, add-one smoothing on
// zero counts, brevity penalty against the closest reference length.
double self_bleu(const std::vector<std::string>& texts, int max_n = 4);

struct TokenRepetition {
  double mean = 0;
  size_t n_texts = 0;
  size_t n_excluded = 0;  // empty texts
};

// Mean over texts of (1 - unique/total) tokens.
TokenRepetition token_repetition_mean(const std::vector<std::string>& texts);

// ---------------------------------------------------------------------------
// Semantic diversity

struct SemanticDiversity {
  double apd = 0;  // average pairwise cosine distance
  double acs = 0;  // average pairwise cosine similarity; apd + acs == 1
};

SemanticDiversity semantic_diversity(const std::vector<VecD>& embeddings);

class EmbeddingBackend {
 public:
  virtual ~EmbeddingBackend() = default;
  virtual VecD embed(const std::string& text) const = 0;  // unit L2 norm
};

// Deterministic seeded feature hashing of token counts, L2-normalized.
// Backend-free default for tests and desk-scale runs.
class HashedBowEmbedder : public EmbeddingBackend {
 public:
  explicit HashedBowEmbedder(int dim = 256, uint64_t seed = 0x5eed);
  VecD embed(const std::string& text) const override;

 private:
  int dim_;
  uint64_t seed_;
};

// ---------------------------------------------------------------------------
// Sentiment

class SentimentScorer {
 public:
  virtual ~SentimentScorer() = default;
  virtual double compound(const std::string& text) const = 0;  // [-1, 1]
};

// Bundled lexicon scorer: summed word valences squashed to [-1, 1].
class LexiconSentimentScorer : public SentimentScorer {
 public:
  LexiconSentimentScorer();  // built-in valence list
  explicit LexiconSentimentScorer(std::map<std::string, double> valences);
  double compound(const std::string& text) const override;

 private:
  std::map<std::string, double> valences_;
};

struct SentimentStats {
  double mean = 0;
  double stdev = 0;  // population
  size_t n = 0;
  size_t n_excluded = 0;  // scorer failures
};

SentimentStats sentiment_stats(const std::vector<std::string>& texts,
                               const SentimentScorer& scorer);

// ---------------------------------------------------------------------------
// Convex-hull coverage

struct Point2 {
  double x = 0, y = 0;
};

// 2-D projection for hull coverage: built-in PCA, or coordinates supplied
// from an external projector (UMAP/t-SNE outputs and the like).
class Projector2D {
 public:
  virtual ~Projector2D() = default;
  virtual std::vector<Point2> project(const std::vector<VecD>& embeddings) const = 0;
};

class PcaProjector : public Projector2D {
 public:
  std::vector<Point2> project(const std::vector<VecD>& embeddings) const override;
};

class ExternalCoordinates : public Projector2D {
 public:
  explicit ExternalCoordinates(std::vector<Point2> coords);
  std::vector<Point2> project(const std::vector<VecD>& embeddings) const override;

 private:
  std::vector<Point2> coords_;
};

// Convex hull via monotone chain; CCW, starting at the lexicographically
// smallest vertex. Collinear input collapses to a degenerate hull.
std::vector<Point2> convex_hull(std::vector<Point2> points);

// Shoelace area of a polygon in the order given.
double polygon_area(const std::vector<Point2>& hull);

struct HullCoverage {
  double area = 0;
  bool degenerate = false;  // fewer than 3 hull vertices
  std::vector<Point2> projected;
};

HullCoverage hull_coverage(const std::vector<VecD>& embeddings,
                           const Projector2D& projector);

// ---------------------------------------------------------------------------
// Supporter judging

class JudgeBackend {
 public:
  virtual ~JudgeBackend() = default;
  // Integer score 1..5; throws when the judge cannot produce one.
  virtual int score(const Dialogue& d, const std::string& metric) const = 0;
};

// Ten metrics in three groups: ES skills, general skills, overall.
const std::vector<std::string>& judge_metrics();
const std::map<std::string, std::vector<std::string>>& judge_metric_groups();

struct JudgeTable {
  // supporter label -> metric -> mean score over judged dialogues
  std::map<std::string, std::map<std::string, double>> means;
  // supporter -> metric -> count of missing (unjudgeable) cells
  std::map<std::string, std::map<std::string, size_t>> missing;
  size_t n_dialogues = 0;
};

// Scores every dialogue on every metric. The supporter label comes from
// metadata["supporter"] (default "supporter"). A judge failure marks that
// cell missing; up to `retries` re-asks per cell.
JudgeTable judge_supporter(const std::vector<Dialogue>& dialogues,
                           const JudgeBackend& judge, int retries = 2);

// ---------------------------------------------------------------------------
// Report

struct DiversityReport {
  double distinct_1 = 0, distinct_2 = 0;
  double self_bleu_score = 0;
  TokenRepetition repetition;
  SemanticDiversity semantic;
  SentimentStats sentiment;
  HullCoverage hull;
};

DiversityReport diversity_report(const std::vector<std::string>& seeker_texts,
                                 const EmbeddingBackend& embedder,
                                 const SentimentScorer& sentiment,
                                 const Projector2D& projector);

// Seeker-side text of a dialogue, one string per dialogue, used as the unit
// for every diversity metric.
std::string seeker_text(const Dialogue& d);

}  // namespace seekersim
