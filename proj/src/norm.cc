// src/norm.cc

// Copyright 2026  spkv authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//  http://www.apache.org/licenses/LICENSE-2.0
//
// THIS CODE IS PROVIDED *AS IS* BASIS, WITHOUT WARRANTIES OR CONDITIONS OF ANY
// KIND, EITHER EXPRESS OR IMPLIED, INCLUDING WITHOUT LIMITATION ANY IMPLIED
// WARRANTIES OR CONDITIONS OF TITLE, FITNESS FOR A PARTICULAR PURPOSE,
// MERCHANTABLITY OR NON-INFRINGEMENT.
// See the Apache 2 License for the specific language governing permissions and
// limitations under the License.

#include "spkv/norm.h"

#include <algorithm>
#include <cmath>
#include <functional>

#include "spkv/error.h"

namespace spkv {

NormStats CohortStats(const Vector &anchor, std::span<const CohortMember> cohort,
                      const PairScorer &scorer, int n_top,
                      std::optional<Language> language_filter) {
  if (n_top < 2) throw UsageError("cohort: n_top must be at least 2");
  std::vector<double> scores;
  scores.reserve(cohort.size());
  for (const auto &m : cohort)
    if (!language_filter || m.language == *language_filter)
      scores.push_back(scorer(anchor, m.vec));
  if (scores.size() < static_cast<size_t>(n_top))
    throw UsageError("cohort: " + std::to_string(scores.size()) +
                     " members after filtering, fewer than n_top=" +
                     std::to_string(n_top));
  // Full sort so the statistics do not depend on cohort order.
  std::sort(scores.begin(), scores.end(), std::greater<>());
  double sum = 0.0;
  for (int i = 0; i < n_top; ++i) sum += scores[i];
  const double mean = sum / n_top;
  double ss = 0.0;
  for (int i = 0; i < n_top; ++i) ss += (scores[i] - mean) * (scores[i] - mean);
  const double sd = std::sqrt(ss / n_top);
  if (!(sd > 0.0)) throw NumericError("cohort: zero variance among top scores");
  return {mean, sd, n_top};
}

double AsNorm(double raw_score, const NormStats &enroll_stats,
              const NormStats &test_stats) {
  if (!(enroll_stats.stddev > 0.0) || !(test_stats.stddev > 0.0))
    throw NumericError("AS-Norm: zero sigma");
  return (raw_score - test_stats.mean) / test_stats.stddev +
         (raw_score - enroll_stats.mean) / enroll_stats.stddev;
}

namespace {

int ClampTop(int n_top, std::span<const CohortMember> cohort,
             std::optional<Language> filter) {
  size_t size = cohort.size();
  if (filter)
    size = std::count_if(cohort.begin(), cohort.end(),
                         [&](const auto &m) { return m.language == *filter; });
  return static_cast<int>(std::min<size_t>(n_top, size));
}

}  // namespace

double LanguageDependentAsNorm(double raw_score, const Vector &enroll,
                               const Vector &test,
                               std::span<const CohortMember> cohort,
                               const PairScorer &scorer, int n_top,
                               Language test_language) {
  const NormStats enroll_stats =
      CohortStats(enroll, cohort, scorer,
                  ClampTop(n_top, cohort, test_language), test_language);
  const NormStats test_stats = CohortStats(
      test, cohort, scorer, ClampTop(n_top, cohort, std::nullopt));
  return AsNorm(raw_score, enroll_stats, test_stats);
}

double PlainAsNorm(double raw_score, const Vector &enroll, const Vector &test,
                   std::span<const CohortMember> cohort,
                   const PairScorer &scorer, int n_top) {
  const int top = ClampTop(n_top, cohort, std::nullopt);
  return AsNorm(raw_score, CohortStats(enroll, cohort, scorer, top),
                CohortStats(test, cohort, scorer, top));
}

namespace {

Vector Softmax(const Vector &logits) {
  const double mx = logits.maxCoeff();
  Vector p = (logits.array() - mx).exp().matrix();
  return p / p.sum();
}

}  // namespace

LangClassifier TrainLanguageId(std::span<const Vector> embeddings,
                               std::span<const Language> labels, int epochs,
                               double learning_rate) {
  if (embeddings.size() != labels.size())
    throw DataError("language id: embeddings and labels differ in length");
  if (embeddings.empty()) throw DataError("language id: no data");
  if (epochs < 0) throw UsageError("language id: negative epochs");
  bool seen[kNumLanguages] = {false, false};
  for (Language l : labels) seen[static_cast<int>(l)] = true;
  if (!seen[0] || !seen[1])
    throw DataError("language id: both languages must be present");
  const Eigen::Index d = embeddings.front().size();
  for (const auto &e : embeddings)
    if (e.size() != d) throw DataError("language id: dimension mismatch");

  LangClassifier c{Matrix::Zero(kNumLanguages, d),
                   Vector::Zero(kNumLanguages)};
  const double n = static_cast<double>(embeddings.size());
  for (int epoch = 0; epoch < epochs; ++epoch) {
    Matrix gw = Matrix::Zero(kNumLanguages, d);
    Vector gb = Vector::Zero(kNumLanguages);
    for (size_t i = 0; i < embeddings.size(); ++i) {
      Vector p = Softmax(c.weights * embeddings[i] + c.bias);
      p(static_cast<int>(labels[i])) -= 1.0;
      gw.noalias() += p * embeddings[i].transpose();
      gb += p;
    }
    c.weights -= (learning_rate / n) * gw;
    c.bias -= (learning_rate / n) * gb;
  }
  return c;
}

LanguagePrediction PredictLanguage(const LangClassifier &classifier,
                                   const Vector &embedding) {
  if (embedding.size() != classifier.weights.cols())
    throw DataError("language id: dimension mismatch");
  const Vector p = Softmax(classifier.weights * embedding + classifier.bias);
  const int best = p(1) > p(0) ? 1 : 0;
  return {static_cast<Language>(best), p(best)};
}

}  // namespace spkv
