// Copyright 2026 The seekersim Authors
// SPDX-License-Identifier: Apache-2.0

#include "seekersim/metrics.hpp"

#include <Eigen/Eigenvalues>

#include <algorithm>
#include <cmath>
#include <set>
#include <unordered_map>

namespace seekersim {

// ---------------------------------------------------------------------------
// Classification

double macro_f1(const std::vector<std::string>& gold,
                const std::vector<std::string>& predicted,
                const std::vector<std::string>& label_set) {
  if (gold.size() != predicted.size())
    throw ShapeError("macro_f1: gold/predicted length mismatch");
  if (gold.empty()) throw ShapeError("macro_f1: empty inputs");
  auto index = [&](const std::string& s) {
    auto it = std::find(label_set.begin(), label_set.end(), s);
    if (it == label_set.end())
      throw ValidationError("macro_f1: label '" + s + "' outside label set");
    return static_cast<size_t>(it - label_set.begin());
  };
  std::vector<long> tp(label_set.size(), 0), fp(label_set.size(), 0),
      fn(label_set.size(), 0), present(label_set.size(), 0);
  for (size_t i = 0; i < gold.size(); ++i) {
    size_t g = index(gold[i]), p = index(predicted[i]);
    present[g] = present[p] = 1;
    if (g == p) ++tp[g];
    else {
      ++fp[p];
      ++fn[g];
    }
  }
  double sum = 0;
  long n_present = 0;
  for (size_t c = 0; c < label_set.size(); ++c) {
    if (!present[c]) continue;  // absent from both sides: excluded
    ++n_present;
    double denom_p = static_cast<double>(tp[c] + fp[c]);
    double denom_r = static_cast<double>(tp[c] + fn[c]);
    double p = denom_p > 0 ? static_cast<double>(tp[c]) / denom_p : 0.0;
    double r = denom_r > 0 ? static_cast<double>(tp[c]) / denom_r : 0.0;
    double f1 = (p + r) > 0 ? 2.0 * p * r / (p + r) : 0.0;
    sum += f1;
  }
  return sum / static_cast<double>(n_present);
}

double accuracy(const std::vector<std::string>& gold,
                const std::vector<std::string>& predicted) {
  if (gold.size() != predicted.size())
    throw ShapeError("accuracy: length mismatch");
  if (gold.empty()) throw ShapeError("accuracy: empty inputs");
  size_t hit = 0;
  for (size_t i = 0; i < gold.size(); ++i)
    if (gold[i] == predicted[i]) ++hit;
  return static_cast<double>(hit) / static_cast<double>(gold.size());
}

std::optional<double> pearson(const std::vector<double>& a,
                              const std::vector<double>& b) {
  if (a.size() != b.size() || a.empty())
    throw ShapeError("pearson: length mismatch");
  double n = static_cast<double>(a.size());
  double ma = 0, mb = 0;
  for (size_t i = 0; i < a.size(); ++i) {
    ma += a[i];
    mb += b[i];
  }
  ma /= n;
  mb /= n;
  double sab = 0, saa = 0, sbb = 0;
  for (size_t i = 0; i < a.size(); ++i) {
    sab += (a[i] - ma) * (b[i] - mb);
    saa += (a[i] - ma) * (a[i] - ma);
    sbb += (b[i] - mb) * (b[i] - mb);
  }
  if (saa == 0.0 || sbb == 0.0) return std::nullopt;
  return sab / std::sqrt(saa * sbb);
}

// ---------------------------------------------------------------------------
// Adherence

const std::vector<Feature>& adherence_features() {
  static const std::vector<Feature> fs = {
      Feature::Coping,     Feature::Style,          Feature::Profanity,
      Feature::Engagement, Feature::Verbosity,      Feature::SelfDisclosure,
      Feature::Resistance, Feature::Turns};
  return fs;
}

AdherenceReport adherence_eval(
    const std::vector<Dialogue>& dialogues,
    const std::function<SeekerProfile(const Dialogue&)>& retagger) {
  AdherenceReport report;
  std::map<Feature, std::vector<std::string>> gold, pred;
  for (const auto& d : dialogues) {
    if (!d.profile)
      throw ValidationError("adherence_eval: dialogue '" + d.dialogue_id +
                            "' has no input profile");
    SeekerProfile tagged;
    try {
      tagged = retagger(d);
    } catch (const std::exception&) {
      ++report.n_excluded;
      continue;
    }
    ++report.n_dialogues;
    for (Feature f : adherence_features()) {
      gold[f].push_back(d.profile->label(f));
      pred[f].push_back(tagged.label(f));
    }
  }
  expect(report.n_dialogues > 0, "adherence_eval: no dialogues survived retagging");

  std::vector<double> f1s;
  for (Feature f : adherence_features()) {
    FeatureScore score;
    score.f1 = macro_f1(gold[f], pred[f], feature_categories(f));
    score.acc = accuracy(gold[f], pred[f]);
    if (feature_is_ordinal(f)) {
      const auto& cats = feature_categories(f);
      auto to_num = [&](const std::vector<std::string>& labels) {
        std::vector<double> out;
        for (const auto& s : labels)
          out.push_back(static_cast<double>(
              std::find(cats.begin(), cats.end(), s) - cats.begin()));
        return out;
      };
      score.pearson_r = pearson(to_num(gold[f]), to_num(pred[f]));
    }
    report.per_feature[to_string(f)] = score;
    f1s.push_back(score.f1);
  }
  double n = static_cast<double>(f1s.size());
  double mean = 0;
  for (double v : f1s) mean += v;
  mean /= n;
  double var = 0;
  for (double v : f1s) var += (v - mean) * (v - mean);
  report.mean = mean;
  report.stdev = std::sqrt(var / n);
  report.min = *std::min_element(f1s.begin(), f1s.end());
  report.max = *std::max_element(f1s.begin(), f1s.end());
  return report;
}

// ---------------------------------------------------------------------------
// Lexical diversity

namespace {

std::vector<std::string> ngrams(const std::vector<std::string>& tokens, int n) {
  std::vector<std::string> out;
  if (static_cast<int>(tokens.size()) < n) return out;
  for (size_t i = 0; i + static_cast<size_t>(n) <= tokens.size(); ++i) {
    std::string g = tokens[i];
    for (int k = 1; k < n; ++k) {
      g.push_back('\x1f');
      g += tokens[i + static_cast<size_t>(k)];
    }
    out.push_back(std::move(g));
  }
  return out;
}

std::unordered_map<std::string, long> ngram_counts(
    const std::vector<std::string>& tokens, int n) {
  std::unordered_map<std::string, long> counts;
  for (auto& g : ngrams(tokens, n)) ++counts[g];
  return counts;
}

}  // namespace

double distinct_n(const std::vector<std::string>& texts, int n) {
  expect(n >= 1, "distinct_n: n must be >= 1");
  expect(!texts.empty(), "distinct_n: empty corpus");
  std::set<std::string> unique;
  long total = 0;
  for (const auto& t : texts) {
    auto toks = split_whitespace(t);
    for (auto& g : ngrams(toks, n)) {
      unique.insert(std::move(g));
      ++total;
    }
  }
  if (total == 0)
    throw ShapeError("distinct_n: every text is shorter than n tokens");
  return static_cast<double>(unique.size()) / static_cast<double>(total);
}

double self_bleu(const std::vector<std::string>& texts, int max_n) {
  expect(texts.size() >= 2, "self_bleu: need at least 2 texts");
  expect(max_n >= 1, "self_bleu: max_n must be >= 1");

  std::vector<std::vector<std::string>> tokenized;
  tokenized.reserve(texts.size());
  for (const auto& t : texts) tokenized.push_back(split_whitespace(t));

  // Per-order n-gram counts of every text, shared across hypotheses.
  std::vector<std::vector<std::unordered_map<std::string, long>>> counts(
      static_cast<size_t>(max_n));
  for (int n = 1; n <= max_n; ++n)
    for (const auto& toks : tokenized)
      counts[static_cast<size_t>(n - 1)].push_back(ngram_counts(toks, n));

  double total = 0;
  for (size_t h = 0; h < texts.size(); ++h) {
    const auto& hyp = tokenized[h];
    double log_sum = 0;
    int orders_used = 0;
    for (int n = 1; n <= max_n; ++n) {
      const auto& hyp_counts = counts[static_cast<size_t>(n - 1)][h];
      long hyp_total = 0;
      for (const auto& [g, c] : hyp_counts) hyp_total += c;
      if (hyp_total == 0) continue;  // hypothesis shorter than n

      // Clip against the maximum count over all references.
      long matched = 0;
      for (const auto& [g, c] : hyp_counts) {
        long best_ref = 0;
        for (size_t r = 0; r < texts.size(); ++r) {
          if (r == h) continue;
          const auto& rc = counts[static_cast<size_t>(n - 1)][r];
          auto it = rc.find(g);
          if (it != rc.end()) best_ref = std::max(best_ref, it->second);
        }
        matched += std::min(c, best_ref);
      }
      double p = matched > 0
                     ? static_cast<double>(matched) / static_cast<double>(hyp_total)
                     : 1.0 / static_cast<double>(hyp_total + 1);  // add-one floor
      log_sum += std::log(p);
      ++orders_used;
    }
    double bleu = orders_used > 0 ? std::exp(log_sum / orders_used) : 0.0;

    // Brevity penalty against the closest reference length.
    long c = static_cast<long>(hyp.size());
    long r_best = -1;
    for (size_t r = 0; r < texts.size(); ++r) {
      if (r == h) continue;
      long rl = static_cast<long>(tokenized[r].size());
      if (r_best < 0 || std::abs(rl - c) < std::abs(r_best - c) ||
          (std::abs(rl - c) == std::abs(r_best - c) && rl < r_best))
        r_best = rl;
    }
    if (c < r_best && c > 0)
      bleu *= std::exp(1.0 - static_cast<double>(r_best) / static_cast<double>(c));
    if (c == 0) bleu = 0.0;
    total += bleu;
  }
  return total / static_cast<double>(texts.size());
}

TokenRepetition token_repetition_mean(const std::vector<std::string>& texts) {
  expect(!texts.empty(), "token_repetition_mean: empty corpus");
  TokenRepetition out;
  double sum = 0;
  for (const auto& t : texts) {
    auto toks = split_whitespace(t);
    if (toks.empty()) {
      ++out.n_excluded;
      continue;
    }
    std::set<std::string> unique(toks.begin(), toks.end());
    sum += 1.0 - static_cast<double>(unique.size()) / static_cast<double>(toks.size());
    ++out.n_texts;
  }
  expect(out.n_texts > 0, "token_repetition_mean: every text is empty");
  out.mean = sum / static_cast<double>(out.n_texts);
  return out;
}

// ---------------------------------------------------------------------------
// Semantic diversity

SemanticDiversity semantic_diversity(const std::vector<VecD>& embeddings) {
  expect(embeddings.size() >= 2, "semantic_diversity: need >= 2 embeddings");
  double sim_sum = 0, dist_sum = 0;
  long pairs = 0;
  for (size_t i = 0; i < embeddings.size(); ++i)
    for (size_t j = i + 1; j < embeddings.size(); ++j) {
      double na = embeddings[i].norm(), nb = embeddings[j].norm();
      expect(na > 0 && nb > 0, "semantic_diversity: zero embedding");
      double cos = embeddings[i].dot(embeddings[j]) / (na * nb);
      sim_sum += cos;
      dist_sum += 1.0 - cos;
      ++pairs;
    }
  SemanticDiversity out;
  out.acs = sim_sum / static_cast<double>(pairs);
  out.apd = dist_sum / static_cast<double>(pairs);
  return out;
}

HashedBowEmbedder::HashedBowEmbedder(int dim, uint64_t seed)
    : dim_(dim), seed_(seed) {
  expect(dim_ >= 2, "embedding dimension must be >= 2");
}

VecD HashedBowEmbedder::embed(const std::string& text) const {
  VecD v = VecD::Zero(dim_);
  for (const auto& tok : split_whitespace(to_lower(text))) {
    uint64_t h = fnv1a(tok, seed_ ^ 0xcbf29ce484222325ULL);
    int idx = static_cast<int>(h % static_cast<uint64_t>(dim_));
    double sign = ((h >> 32) & 1) ? 1.0 : -1.0;
    v[idx] += sign;
  }
  double n = v.norm();
  if (n == 0.0) {
    // Empty or fully cancelled text: a fixed unit direction keeps the
    // backend's unit-norm contract.
    v[0] = 1.0;
    return v;
  }
  return v / n;
}

// ---------------------------------------------------------------------------
// Sentiment

LexiconSentimentScorer::LexiconSentimentScorer() {
  valences_ = {
      {"good", 1.9},      {"great", 3.1},    {"love", 3.2},     {"happy", 2.7},
      {"hope", 1.9},      {"hopeful", 2.3},  {"thanks", 1.9},   {"helpful", 1.8},
      {"calm", 1.3},      {"calmer", 1.5},   {"better", 1.9},   {"proud", 2.1},
      {"enjoy", 2.2},     {"enjoyed", 2.2},  {"relief", 1.9},   {"smile", 1.8},
      {"smiled", 1.8},    {"appreciated", 2.0}, {"agreed", 1.1}, {"warm", 1.4},
      {"bad", -2.5},      {"sad", -2.1},     {"hate", -2.7},    {"angry", -2.3},
      {"terrible", -3.1}, {"awful", -3.1},   {"worse", -2.1},   {"fear", -2.2},
      {"fears", -2.2},    {"worried", -1.7}, {"worry", -1.7},   {"stress", -1.9},
      {"stressed", -2.0}, {"alone", -1.0},   {"useless", -1.9}, {"pointless", -1.9},
      {"furious", -3.0},  {"crying", -2.2},  {"tears", -1.8},   {"afraid", -2.0},
      {"scared", -2.0},   {"anxious", -1.9}, {"guilty", -1.8},  {"painful", -2.3},
      {"ashamed", -2.1},  {"vulnerable", -1.2}, {"lonely", -1.9}, {"hurt", -2.1},
  };
}

LexiconSentimentScorer::LexiconSentimentScorer(std::map<std::string, double> valences)
    : valences_(std::move(valences)) {}

double LexiconSentimentScorer::compound(const std::string& text) const {
  double s = 0;
  for (const auto& tok : split_whitespace(to_lower(text))) {
    std::string t = tok;
    while (!t.empty() && !std::isalnum(static_cast<unsigned char>(t.back()))) t.pop_back();
    auto it = valences_.find(t);
    if (it != valences_.end()) s += it->second;
  }
  return s / std::sqrt(s * s + 15.0);
}

SentimentStats sentiment_stats(const std::vector<std::string>& texts,
                               const SentimentScorer& scorer) {
  expect(!texts.empty(), "sentiment_stats: empty corpus");
  SentimentStats out;
  std::vector<double> scores;
  for (const auto& t : texts) {
    try {
      double c = scorer.compound(t);
      expect(c >= -1.0 && c <= 1.0, "compound score outside [-1,1]");
      scores.push_back(c);
    } catch (const std::exception&) {
      ++out.n_excluded;
    }
  }
  expect(!scores.empty(), "sentiment_stats: every text failed scoring");
  out.n = scores.size();
  double mean = 0;
  for (double s : scores) mean += s;
  mean /= static_cast<double>(scores.size());
  double var = 0;
  for (double s : scores) var += (s - mean) * (s - mean);
  out.mean = mean;
  out.stdev = std::sqrt(var / static_cast<double>(scores.size()));
  return out;
}

// ---------------------------------------------------------------------------
// Convex hull

std::vector<Point2> convex_hull(std::vector<Point2> points) {
  std::sort(points.begin(), points.end(), [](const Point2& a, const Point2& b) {
    return a.x < b.x || (a.x == b.x && a.y < b.y);
  });
  points.erase(std::unique(points.begin(), points.end(),
                           [](const Point2& a, const Point2& b) {
                             return a.x == b.x && a.y == b.y;
                           }),
               points.end());
  size_t n = points.size();
  if (n <= 2) return points;

  auto cross = [](const Point2& o, const Point2& a, const Point2& b) {
    return (a.x - o.x) * (b.y - o.y) - (a.y - o.y) * (b.x - o.x);
  };
  std::vector<Point2> hull(2 * n);
  size_t k = 0;
  for (size_t i = 0; i < n; ++i) {  // lower
    while (k >= 2 && cross(hull[k - 2], hull[k - 1], points[i]) <= 0) --k;
    hull[k++] = points[i];
  }
  for (size_t i = n - 1, t = k + 1; i-- > 0;) {  // upper
    while (k >= t && cross(hull[k - 2], hull[k - 1], points[i]) <= 0) --k;
    hull[k++] = points[i];
  }
  hull.resize(k - 1);  // last point equals the first
  return hull;
}

double polygon_area(const std::vector<Point2>& hull) {
  if (hull.size() < 3) return 0.0;
  double acc = 0;
  for (size_t i = 0; i < hull.size(); ++i) {
    const Point2& a = hull[i];
    const Point2& b = hull[(i + 1) % hull.size()];
    acc += a.x * b.y - b.x * a.y;
  }
  return 0.5 * std::abs(acc);
}

std::vector<Point2> PcaProjector::project(const std::vector<VecD>& embeddings) const {
  expect(!embeddings.empty(), "pca: no embeddings");
  const int n = static_cast<int>(embeddings.size());
  const int d = static_cast<int>(embeddings[0].size());
  expect(d >= 2, "pca: need at least 2 dimensions");
  MatD X(n, d);
  for (int i = 0; i < n; ++i) {
    expect(embeddings[static_cast<size_t>(i)].size() == d,
           "pca: inconsistent embedding dimensions");
    X.row(i) = embeddings[static_cast<size_t>(i)].transpose();
  }
  VecD mean = X.colwise().mean().transpose();
  X.rowwise() -= mean.transpose();
  MatD cov = (X.transpose() * X) / std::max(1, n - 1);
  Eigen::SelfAdjointEigenSolver<MatD> solver(cov);
  expect(solver.info() == Eigen::Success, "pca: eigendecomposition failed");
  // Columns are sorted by increasing eigenvalue; take the top two with a
  // deterministic sign convention.
  MatD basis(d, 2);
  basis.col(0) = solver.eigenvectors().col(d - 1);
  basis.col(1) = solver.eigenvectors().col(d - 2);
  for (int c = 0; c < 2; ++c) {
    int arg = 0;
    basis.col(c).cwiseAbs().maxCoeff(&arg);
    if (basis(arg, c) < 0) basis.col(c) = -basis.col(c);
  }
  MatD proj = X * basis;
  std::vector<Point2> out(static_cast<size_t>(n));
  for (int i = 0; i < n; ++i) out[static_cast<size_t>(i)] = {proj(i, 0), proj(i, 1)};
  return out;
}

ExternalCoordinates::ExternalCoordinates(std::vector<Point2> coords)
    : coords_(std::move(coords)) {}

std::vector<Point2> ExternalCoordinates::project(
    const std::vector<VecD>& embeddings) const {
  expect(coords_.size() == embeddings.size() || embeddings.empty(),
         "external coordinates: count mismatch");
  return coords_;
}

HullCoverage hull_coverage(const std::vector<VecD>& embeddings,
                           const Projector2D& projector) {
  HullCoverage out;
  out.projected = projector.project(embeddings);
  expect(out.projected.size() >= 3, "hull_coverage: need at least 3 points");
  auto hull = convex_hull(out.projected);
  if (hull.size() < 3) {
    out.degenerate = true;  // collinear or coincident points
    out.area = 0.0;
    return out;
  }
  out.area = polygon_area(hull);
  return out;
}

// ---------------------------------------------------------------------------
// Judging

const std::vector<std::string>& judge_metrics() {
  static const std::vector<std::string> ms = {
      "Identification", "Comforting", "Suggestions",   "Experience",
      "Informativeness", "Consistency", "Role-Adherence", "Expression",
      "Humanness",       "Overall"};
  return ms;
}

const std::map<std::string, std::vector<std::string>>& judge_metric_groups() {
  static const std::map<std::string, std::vector<std::string>> groups = {
      {"es_skills",
       {"Identification", "Comforting", "Suggestions", "Experience",
        "Informativeness"}},
      {"general_skills",
       {"Consistency", "Role-Adherence", "Expression", "Humanness"}},
      {"overall", {"Overall"}}};
  return groups;
}

JudgeTable judge_supporter(const std::vector<Dialogue>& dialogues,
                           const JudgeBackend& judge, int retries) {
  expect(judge_metrics().size() == 10, "judge metric set must have 10 entries");
  JudgeTable table;
  std::map<std::string, std::map<std::string, std::pair<double, long>>> acc;
  for (const auto& d : dialogues) {
    ++table.n_dialogues;
    auto it = d.metadata.find("supporter");
    std::string supporter = it == d.metadata.end() ? "supporter" : it->second;
    for (const auto& metric : judge_metrics()) {
      std::optional<int> score;
      for (int attempt = 0; attempt <= retries && !score; ++attempt) {
        try {
          int s = judge.score(d, metric);
          if (s >= 1 && s <= 5) score = s;
        } catch (const std::exception&) {
        }
      }
      if (score) {
        auto& cell = acc[supporter][metric];
        cell.first += *score;
        cell.second += 1;
      } else {
        table.missing[supporter][metric] += 1;
      }
    }
  }
  for (const auto& [supporter, metrics] : acc)
    for (const auto& [metric, cell] : metrics)
      table.means[supporter][metric] = cell.first / static_cast<double>(cell.second);
  return table;
}

// ---------------------------------------------------------------------------
// Composite report

std::string seeker_text(const Dialogue& d) {
  std::string out;
  for (const auto& t : d.turns) {
    if (t.role != Role::Seeker) continue;
    if (!out.empty()) out.push_back(' ');
    out += t.text;
  }
  return out;
}

DiversityReport diversity_report(const std::vector<std::string>& seeker_texts,
                                 const EmbeddingBackend& embedder,
                                 const SentimentScorer& sentiment,
                                 const Projector2D& projector) {
  DiversityReport report;
  report.distinct_1 = distinct_n(seeker_texts, 1);
  report.distinct_2 = distinct_n(seeker_texts, 2);
  report.self_bleu_score = self_bleu(seeker_texts, 4);
  report.repetition = token_repetition_mean(seeker_texts);
  std::vector<VecD> embeddings;
  embeddings.reserve(seeker_texts.size());
  for (const auto& t : seeker_texts) embeddings.push_back(embedder.embed(t));
  report.semantic = semantic_diversity(embeddings);
  report.sentiment = sentiment_stats(seeker_texts, sentiment);
  report.hull = hull_coverage(embeddings, projector);
  return report;
}

}  // namespace seekersim
