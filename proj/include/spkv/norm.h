// include/spkv/norm.h

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

#ifndef SPKV_NORM_H_
#define SPKV_NORM_H_

#include <functional>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "spkv/core.h"

namespace spkv {

struct CohortMember {
  std::string utt_id;
  Vector vec;
  Language language = Language::kL1;
};

using Cohort = std::vector<CohortMember>;

struct NormStats {
  double mean = 0.0;
  double stddev = 0.0;  // population form
  int n_top = 0;
};

using PairScorer = std::function<double(const Vector &, const Vector &)>;

inline constexpr int kDefaultCohortTop = 200;

// Scores `anchor` against every cohort member (optionally restricted to one
// language), keeps the n_top highest scores and returns their mean and
// population standard deviation.  Throws UsageError if n_top < 2 or the
// filtered cohort is smaller than n_top, NumericError on zero variance.
NormStats CohortStats(const Vector &anchor, std::span<const CohortMember> cohort,
                      const PairScorer &scorer, int n_top,
                      std::optional<Language> language_filter = std::nullopt);

// (s - mu_t) / sigma_t + (s - mu_e) / sigma_e
double AsNorm(double raw_score, const NormStats &enroll_stats,
              const NormStats &test_stats);

// Adaptive symmetric normalization whose enroll-side cohort is restricted to
// the test utterance's language; the test-side cohort is unrestricted.
// n_top is clamped to the size of each (filtered) cohort.
double LanguageDependentAsNorm(double raw_score, const Vector &enroll,
                               const Vector &test,
                               std::span<const CohortMember> cohort,
                               const PairScorer &scorer, int n_top,
                               Language test_language);

// Same normalization without any language restriction.
double PlainAsNorm(double raw_score, const Vector &enroll, const Vector &test,
                   std::span<const CohortMember> cohort,
                   const PairScorer &scorer, int n_top);

// Multinomial logistic language classifier over embeddings.
struct LangClassifier {
  Matrix weights;  // kNumLanguages x D
  Vector bias;     // kNumLanguages
};

struct LanguagePrediction {
  Language language = Language::kL1;
  double posterior = 0.0;
};

// Full-batch gradient descent on mean cross-entropy from zero weights.
// Throws DataError unless both languages are present.
LangClassifier TrainLanguageId(std::span<const Vector> embeddings,
                               std::span<const Language> labels, int epochs,
                               double learning_rate);

// Argmax posterior; exact ties go to the lower-indexed language.
LanguagePrediction PredictLanguage(const LangClassifier &classifier,
                                   const Vector &embedding);

}  // namespace spkv

#endif  // SPKV_NORM_H_
