// tests/norm_test.cc

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

#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <algorithm>
#include <cmath>

#include "spkv/backend.h"
#include "spkv/error.h"
#include "spkv/norm.h"
#include "spkv/rng.h"
#include "spkv/synthgen.h"

using namespace spkv;

namespace {

// Scores are the single coordinate of the cohort member.
double FirstCoord(const Vector &, const Vector &m) { return m(0); }

CohortMember Scalar(const std::string &id, double v,
                    Language l = Language::kL1) {
  return {id, Vector::Constant(1, v), l};
}

Cohort RandomCohort(Rng &rng, int n, int d, bool mixed) {
  Cohort c;
  for (int i = 0; i < n; ++i) {
    Vector v(d);
    for (int k = 0; k < d; ++k) v(k) = rng.Normal();
    c.push_back({"c" + std::to_string(i), v,
                 mixed && i % 2 ? Language::kL2 : Language::kL1});
  }
  return c;
}

Vector RandVec(Rng &rng, int d) {
  Vector v(d);
  for (int k = 0; k < d; ++k) v(k) = rng.Normal();
  return v;
}

}  // namespace

TEST_CASE("cohort stats examples") {
  const Vector anchor = Vector::Ones(1);
  Cohort flat = {Scalar("a", 0.5), Scalar("b", 0.5)};
  CHECK_THROWS_WITH_AS(CohortStats(anchor, flat, FirstCoord, 2),
                       doctest::Contains("zero variance"), NumericError);
  Cohort three = {Scalar("a", 0.1), Scalar("b", 0.9), Scalar("c", 0.5)};
  const NormStats s = CohortStats(anchor, three, FirstCoord, 2);
  CHECK(s.mean == doctest::Approx(0.7).epsilon(1e-15));
  CHECK(s.stddev == doctest::Approx(0.2).epsilon(1e-14));
  CHECK(s.n_top == 2);
  CHECK_THROWS_AS(CohortStats(anchor, three, FirstCoord, 4), UsageError);
}

TEST_CASE("language filter equals the sub-cohort") {
  Rng rng(3);
  const Cohort mixed = RandomCohort(rng, 40, 4, true);
  Cohort l2;
  for (const auto &m : mixed)
    if (m.language == Language::kL2) l2.push_back(m);
  const Vector anchor = RandVec(rng, 4);
  const NormStats a = CohortStats(anchor, mixed, CosineScore, 7, Language::kL2);
  const NormStats b = CohortStats(anchor, l2, CosineScore, 7);
  CHECK(a.mean == b.mean);
  CHECK(a.stddev == b.stddev);
}

TEST_CASE("cohort stats are order invariant") {
  Rng rng(4);
  for (int i = 0; i < 10; ++i) {
    Cohort c = RandomCohort(rng, 30, 3, true);
    const Vector anchor = RandVec(rng, 3);
    const NormStats a = CohortStats(anchor, c, CosineScore, 10);
    for (size_t k = c.size() - 1; k > 0; --k)
      std::swap(c[k], c[rng.UniformInt(k + 1)]);
    const NormStats b = CohortStats(anchor, c, CosineScore, 10);
    CHECK(a.mean == b.mean);
    CHECK(a.stddev == b.stddev);
  }
}

TEST_CASE("as-norm examples and monotonicity") {
  const NormStats unit{0.0, 1.0, 2};
  CHECK(AsNorm(1.0, unit, unit) == 2.0);
  const NormStats m{0.3, 0.7, 2};
  CHECK(AsNorm(0.3, m, m) == 0.0);
  CHECK(AsNorm(1.0, NormStats{0.5, 0.5, 2}, unit) == 2.0);
  CHECK_THROWS_AS(AsNorm(1.0, NormStats{0.0, 0.0, 2}, unit), NumericError);
  const NormStats e{0.2, 0.3, 5}, t{-0.1, 0.9, 5};
  double prev = AsNorm(-3.0, e, t);
  for (double s = -2.9; s < 3.0; s += 0.1) {
    const double cur = AsNorm(s, e, t);
    CHECK(cur > prev);
    prev = cur;
  }
}

TEST_CASE("language-dependent as-norm composition") {
  Rng rng(5);
  const Vector enroll = RandVec(rng, 4), test = RandVec(rng, 4);
  const double raw = CosineScore(enroll, test);

  SUBCASE("monolingual cohort equals plain as-norm") {
    const Cohort mono = RandomCohort(rng, 25, 4, false);
    const double ld = LanguageDependentAsNorm(raw, enroll, test, mono,
                                              CosineScore, 10, Language::kL1);
    CHECK(ld == PlainAsNorm(raw, enroll, test, mono, CosineScore, 10));
    const double direct =
        AsNorm(raw, CohortStats(enroll, mono, CosineScore, 10),
               CohortStats(test, mono, CosineScore, 10));
    CHECK(ld == direct);
  }
  SUBCASE("mixed cohort uses the test language on the enroll side only") {
    const Cohort mixed = RandomCohort(rng, 40, 4, true);
    const double ld = LanguageDependentAsNorm(raw, enroll, test, mixed,
                                              CosineScore, 8, Language::kL2);
    const NormStats es = CohortStats(enroll, mixed, CosineScore, 8, Language::kL2);
    const NormStats ts = CohortStats(test, mixed, CosineScore, 8);
    CHECK(ld == AsNorm(raw, es, ts));
  }
  SUBCASE("cohort depth is clamped to the cohort size") {
    const Cohort mixed = RandomCohort(rng, 12, 4, true);
    const double ld = LanguageDependentAsNorm(raw, enroll, test, mixed,
                                              CosineScore, 200, Language::kL2);
    const NormStats es = CohortStats(enroll, mixed, CosineScore, 6, Language::kL2);
    const NormStats ts = CohortStats(test, mixed, CosineScore, 12);
    CHECK(ld == AsNorm(raw, es, ts));
  }
}

TEST_CASE("normalization keeps the ranking within an enroll/test-language cell") {
  Rng rng(6);
  const Cohort mixed = RandomCohort(rng, 40, 4, true);
  const Vector enroll = RandVec(rng, 4);
  const Vector test = RandVec(rng, 4);
  // Trials sharing the enroll model, test stats and test language differ
  // only in raw score.
  std::vector<double> raws = {-0.4, 0.1, 0.15, 0.8};
  std::vector<double> normed;
  for (double r : raws)
    normed.push_back(LanguageDependentAsNorm(r, enroll, test, mixed,
                                             CosineScore, 10, Language::kL1));
  CHECK(std::is_sorted(normed.begin(), normed.end()));
}

TEST_CASE("language-dependent as-norm shrinks the cross-language target gap") {
  GenConfig gc;
  gc.n_speakers = 60;
  gc.n_phrases = 2;
  gc.n_utts_per_cell = 6;
  gc.dim = 16;
  gc.phrase_strength = 0.0;
  gc.language_shift = 3.0;
  gc.noise_sigma = 0.6;
  gc.phrase_labels = false;
  gc.seed = 17;
  const SynthCorpus c = GenCorpus(gc);
  // Speakers 0-29 form the cohort (one mean per speaker and language),
  // speakers 30-59 provide trials.
  Cohort cohort;
  const int per_spk = gc.n_phrases * gc.n_utts_per_cell;
  for (int s = 0; s < 30; ++s)
    for (Language l : {Language::kL1, Language::kL2}) {
      Vector acc = Vector::Zero(gc.dim);
      for (int u = 0; u < per_spk; ++u)
        if (c.metas[s * per_spk + u].language == l)
          acc += c.embeddings[s * per_spk + u].vec;
      cohort.push_back({"c" + std::to_string(s), acc.normalized(), l});
    }
  double same_ld = 0, cross_ld = 0, same_pl = 0, cross_pl = 0;
  int n_same = 0, n_cross = 0;
  for (int s = 30; s < 60; ++s) {
    const int base = s * per_spk;
    // First three L1 utterances enroll; the rest test.
    Vector enroll = Vector::Zero(gc.dim);
    for (int u = 0; u < 3; ++u) enroll += c.embeddings[base + u].vec;
    enroll.normalize();
    for (int u = 3; u < per_spk; ++u) {
      const auto &t = c.embeddings[base + u].vec;
      const Language lang = c.metas[base + u].language;
      const double raw = CosineScore(enroll, t);
      const double ld = LanguageDependentAsNorm(raw, enroll, t, cohort,
                                                CosineScore, 10, lang);
      const double pl = PlainAsNorm(raw, enroll, t, cohort, CosineScore, 10);
      if (lang == Language::kL1) {
        same_ld += ld;
        same_pl += pl;
        ++n_same;
      } else {
        cross_ld += ld;
        cross_pl += pl;
        ++n_cross;
      }
    }
  }
  const double gap_ld = same_ld / n_same - cross_ld / n_cross;
  const double gap_pl = same_pl / n_same - cross_pl / n_cross;
  CHECK(gap_pl > 0.0);
  CHECK(std::abs(gap_ld) < std::abs(gap_pl));
}

TEST_CASE("language identification") {
  Rng rng(8);
  SUBCASE("separable clusters are learned exactly") {
    std::vector<Vector> x;
    std::vector<Language> y;
    for (int i = 0; i < 200; ++i) {
      Vector v = 0.3 * RandVec(rng, 5);
      const bool l2 = i % 2;
      v(0) += l2 ? -2.0 : 2.0;
      x.push_back(v);
      y.push_back(l2 ? Language::kL2 : Language::kL1);
    }
    const LangClassifier c = TrainLanguageId(x, y, 200, 1.0);
    for (size_t i = 0; i < x.size(); ++i)
      CHECK(PredictLanguage(c, x[i]).language == y[i]);
  }
  SUBCASE("zero epochs gives a uniform classifier") {
    std::vector<Vector> x = {RandVec(rng, 3), RandVec(rng, 3)};
    std::vector<Language> y = {Language::kL1, Language::kL2};
    const LangClassifier c = TrainLanguageId(x, y, 0, 1.0);
    const LanguagePrediction p = PredictLanguage(c, RandVec(rng, 3));
    CHECK(p.language == Language::kL1);
    CHECK(p.posterior == 0.5);
  }
  SUBCASE("aligned with the L2 weights") {
    LangClassifier c{Matrix::Zero(2, 3), Vector::Zero(2)};
    c.weights.row(1) << 1.0, 0.0, 0.0;
    Vector v(3);
    v << 100.0, 0.0, 0.0;
    const LanguagePrediction p = PredictLanguage(c, v);
    CHECK(p.language == Language::kL2);
    CHECK(p.posterior > 1.0 - 1e-12);
    CHECK_THROWS_AS(PredictLanguage(c, Vector::Zero(2)), DataError);
  }
  SUBCASE("single language is rejected") {
    std::vector<Vector> x = {RandVec(rng, 3)};
    std::vector<Language> y = {Language::kL1};
    CHECK_THROWS_AS(TrainLanguageId(x, y, 1, 1.0), DataError);
  }
}

TEST_CASE("language identification is at chance without a language shift") {
  auto load = [](uint64_t seed, std::vector<Vector> &x,
                 std::vector<Language> &y) {
    GenConfig gc;
    gc.n_speakers = 50;
    gc.n_phrases = 4;
    gc.n_utts_per_cell = 5;
    gc.phrase_strength = 0.0;
    gc.language_shift = 0.0;
    gc.seed = seed;
    const SynthCorpus c = GenCorpus(gc);
    for (size_t i = 0; i < c.embeddings.size(); ++i) {
      x.push_back(c.embeddings[i].vec);
      y.push_back(c.metas[i].language);
    }
  };
  std::vector<Vector> xtr, xte;
  std::vector<Language> ytr, yte;
  load(1, xtr, ytr);
  load(2, xte, yte);
  REQUIRE(xte.size() == 1000u);
  const LangClassifier c = TrainLanguageId(xtr, ytr, 100, 0.5);
  int correct = 0;
  for (size_t i = 0; i < xte.size(); ++i)
    correct += PredictLanguage(c, xte[i]).language == yte[i];
  const double acc = correct / 1000.0;
  CHECK(acc >= 0.4);
  CHECK(acc <= 0.6);
}
