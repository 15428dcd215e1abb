// tests/synthgen_test.cc

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

#include <cmath>
#include <map>
#include <sstream>

#include "spkv/error.h"
#include "spkv/eval.h"
#include "spkv/io.h"
#include "spkv/rng.h"
#include "spkv/synthgen.h"

using namespace spkv;

namespace {

std::string Serialize(const SynthCorpus &c) {
  std::ostringstream os;
  WriteEmbeddings(os, c.embeddings);
  WriteMetas(os, c.metas);
  WritePhrases(os, c.inventory);
  return os.str();
}

// Nearest-centroid accuracy where the class of utterance i is label(i).
template <typename LabelFn>
double NearestCentroidAccuracy(const SynthCorpus &c, LabelFn label) {
  std::map<std::string, Vector> sums;
  for (size_t i = 0; i < c.embeddings.size(); ++i) {
    auto [it, fresh] = sums.try_emplace(label(i), Vector::Zero(c.embeddings[i].vec.size()));
    it->second += c.embeddings[i].vec;
  }
  int correct = 0;
  for (size_t i = 0; i < c.embeddings.size(); ++i) {
    std::string best;
    double best_d = INFINITY;
    for (const auto &[name, v] : sums) {
      const double d = (c.embeddings[i].vec - v.normalized()).norm();
      if (d < best_d) {
        best_d = d;
        best = name;
      }
    }
    correct += best == label(i);
  }
  return static_cast<double>(correct) / c.embeddings.size();
}

}  // namespace

TEST_CASE("noise-free corpus repeats each speaker's vector") {
  GenConfig gc;
  gc.noise_sigma = 0.0;
  gc.phrase_strength = 0.0;
  gc.language_shift = 0.0;
  const SynthCorpus c = GenCorpus(gc);
  std::map<std::string, Vector> first;
  for (size_t i = 0; i < c.embeddings.size(); ++i) {
    auto [it, fresh] = first.try_emplace(c.metas[i].speaker_id, c.embeddings[i].vec);
    CHECK(c.embeddings[i].vec == it->second);
    CHECK(std::abs(c.embeddings[i].vec.norm() - 1.0) < 1e-12);
  }
  CHECK(first.size() == 20u);
}

TEST_CASE("corpus generation is deterministic") {
  GenConfig gc;
  gc.seed = 7;
  gc.transcript_error_rate = 0.05;
  const std::string a = Serialize(GenCorpus(gc));
  CHECK(a == Serialize(GenCorpus(gc)));
  gc.seed = 8;
  CHECK(a != Serialize(GenCorpus(gc)));
}

TEST_CASE("corpus shape and unit norms") {
  GenConfig gc;
  gc.n_speakers = 5;
  gc.n_phrases = 3;
  gc.n_utts_per_cell = 4;
  gc.dim = 7;
  gc.language_shift = 2.0;
  const SynthCorpus c = GenCorpus(gc);
  CHECK(c.embeddings.size() == 60u);
  CHECK(c.metas.size() == 60u);
  CHECK(c.inventory.size() == 3u);
  CHECK(c.speaker_factors.size() == 5u);
  CHECK(c.phrase_factors.size() == 3u);
  CHECK(c.language_shift.size() == 7);
  for (size_t i = 0; i < c.embeddings.size(); ++i) {
    CHECK(c.embeddings[i].utt_id == c.metas[i].utt_id);
    CHECK(c.embeddings[i].vec.size() == 7);
    CHECK(std::abs(c.embeddings[i].vec.norm() - 1.0) < 1e-12);
    REQUIRE(c.metas[i].phrase_id.has_value());
    CHECK(c.inventory.IndexOf(*c.metas[i].phrase_id).has_value());
  }
  gc.dim = 1;
  CHECK_THROWS_AS(GenCorpus(gc), UsageError);
  gc.dim = 4;
  gc.transcript_error_rate = 1.5;
  CHECK_THROWS_AS(GenCorpus(gc), UsageError);
}

TEST_CASE("strong phrase factors dominate nearest-centroid classification") {
  GenConfig gc;
  gc.n_speakers = 10;
  gc.n_phrases = 4;
  gc.phrase_strength = 4.0;
  gc.noise_sigma = 0.8;
  const SynthCorpus c = GenCorpus(gc);
  const double phrase_acc =
      NearestCentroidAccuracy(c, [&](size_t i) { return *c.metas[i].phrase_id; });
  const double spk_acc =
      NearestCentroidAccuracy(c, [&](size_t i) { return c.metas[i].speaker_id; });
  CHECK(phrase_acc > spk_acc);
}

TEST_CASE("without a language shift the languages coincide as noise vanishes") {
  auto gap = [](double sigma, double beta) {
    GenConfig gc;
    gc.phrase_strength = 0.0;
    gc.language_shift = beta;
    gc.noise_sigma = sigma;
    const SynthCorpus c = GenCorpus(gc);
    std::map<std::string, std::pair<Vector, Vector>> acc;
    for (size_t i = 0; i < c.embeddings.size(); ++i) {
      auto &slot = acc[c.metas[i].speaker_id];
      if (slot.first.size() == 0) {
        slot.first = Vector::Zero(gc.dim);
        slot.second = Vector::Zero(gc.dim);
      }
      (c.metas[i].language == Language::kL1 ? slot.first : slot.second) +=
          c.embeddings[i].vec;
    }
    double total = 0;
    for (const auto &[spk, v] : acc)
      total += (v.first.normalized() - v.second.normalized()).norm();
    return total / acc.size();
  };
  CHECK(gap(0.0, 0.0) == 0.0);
  CHECK(gap(0.01, 0.0) < gap(0.1, 0.0));
  CHECK(gap(0.1, 0.0) < gap(0.5, 0.0));
  CHECK(gap(0.0, 1.0) > 0.1);
}

TEST_CASE("transcripts") {
  CHECK(GenTranscript("salam", 0.0, 123) == "salam");
  CHECK(GenTranscript("salam dorost", 0.5, 9) == GenTranscript("salam dorost", 0.5, 9));
  Rng rng(4);
  long edits = 0, chars = 0;
  for (int block = 0; block < 100; ++block) {
    std::string ref;
    for (int i = 0; i < 100; ++i) ref.push_back(static_cast<char>('a' + rng.UniformInt(26)));
    const std::string hyp = GenTranscript(ref, 0.1, 1000 + block);
    edits += Levenshtein(ref, hyp);
    chars += static_cast<long>(ref.size());
  }
  const double rate = static_cast<double>(edits) / chars;
  CHECK(rate >= 0.08);
  CHECK(rate <= 0.12);
}

TEST_CASE("noisy transcripts are classified to their phrase") {
  GenConfig gc;
  gc.n_speakers = 10;
  gc.n_phrases = 10;
  gc.n_utts_per_cell = 10;
  gc.transcript_error_rate = 0.1;
  const SynthCorpus c = GenCorpus(gc);
  for (size_t a = 0; a < c.inventory.size(); ++a)
    for (size_t b = a + 1; b < c.inventory.size(); ++b) {
      const auto &ta = c.inventory.entries()[a].text, &tb = c.inventory.entries()[b].text;
      CHECK(Levenshtein(ta, tb) >= 0.3 * std::max(ta.size(), tb.size()));
    }
  int correct = 0;
  for (const auto &m : c.metas)
    correct += ClassifyPhrase(*m.transcript, c.inventory) == *m.phrase_id;
  CHECK(c.metas.size() == 1000u);
  CHECK(correct / 1000.0 >= 0.99);
}

TEST_CASE("largest remainder allocation") {
  CHECK(AllocateCounts({0.25, 0.25, 0.25, 0.25}, 1000) == std::vector<int>{250, 250, 250, 250});
  CHECK(AllocateCounts({1, 1, 1}, 10) == std::vector<int>{4, 3, 3});
  CHECK(AllocateCounts({0.5, 0.3, 0.2}, 7) == std::vector<int>{4, 2, 1});
  CHECK_THROWS_AS(AllocateCounts({0, 0}, 3), UsageError);
}

TEST_CASE("text-dependent trials") {
  GenConfig gc;
  const SynthCorpus c = GenCorpus(gc);
  TrialRequest req;

  SUBCASE("only TC requested") {
    req.proportions = {1, 0, 0, 0};
    req.n_trials = 200;
    const TrialList t = GenTrials(c, req);
    for (const auto &k : t.keys) CHECK(k.label == TrialLabel::kTC);
    CHECK(ValidateProtocol(t.trials, t.keys, c.metas, t.enroll).empty());
  }
  SUBCASE("default proportions histogram") {
    const TrialList t = GenTrials(c, req);
    std::map<TrialLabel, int> h;
    for (const auto &k : t.keys) ++h[k.label];
    const auto want = AllocateCounts(req.proportions, req.n_trials);
    CHECK(h[TrialLabel::kTC] == want[0]);
    CHECK(h[TrialLabel::kTW] == want[1]);
    CHECK(h[TrialLabel::kIC] == want[2]);
    CHECK(h[TrialLabel::kIW] == want[3]);
    CHECK(ValidateProtocol(t.trials, t.keys, c.metas, t.enroll).empty());
    // Labels agree with the metadata.
    std::map<std::string, const UttMeta *> by_id;
    for (const auto &m : c.metas) by_id[m.utt_id] = &m;
    for (size_t i = 0; i < t.trials.size(); ++i) {
      const auto &tr = t.trials[i];
      const UttMeta &enroll = *by_id.at(t.enroll.at(tr.model_id).front());
      const UttMeta &test = *by_id.at(tr.test_utt_id);
      const bool same_spk = enroll.speaker_id == test.speaker_id;
      const bool same_ph = *tr.claimed_phrase_id == *test.phrase_id;
      CHECK(*enroll.phrase_id == *tr.claimed_phrase_id);
      const TrialLabel expect = same_spk ? (same_ph ? TrialLabel::kTC : TrialLabel::kTW)
                                         : (same_ph ? TrialLabel::kIC : TrialLabel::kIW);
      CHECK(t.keys[i].label == expect);
      if (expect == TrialLabel::kTC) {
        const auto &en = t.enroll.at(tr.model_id);
        CHECK(std::find(en.begin(), en.end(), tr.test_utt_id) == en.end());
      }
    }
  }
  SUBCASE("deterministic for a fixed seed") {
    const TrialList a = GenTrials(c, req), b = GenTrials(c, req);
    std::ostringstream sa, sb;
    WriteTrials(sa, a.trials);
    WriteKeys(sa, a.keys);
    WriteTrials(sb, b.trials);
    WriteKeys(sb, b.keys);
    CHECK(sa.str() == sb.str());
  }
  SUBCASE("infeasible requests") {
    GenConfig one = gc;
    one.n_phrases = 1;
    const SynthCorpus c1 = GenCorpus(one);
    CHECK_THROWS_AS(GenTrials(c1, req), DataError);
    GenConfig unlabeled = gc;
    unlabeled.phrase_labels = false;
    CHECK_THROWS_AS(GenTrials(GenCorpus(unlabeled), req), DataError);
  }
}

TEST_CASE("text-independent trials") {
  GenConfig gc;
  gc.phrase_labels = false;
  gc.language_shift = 1.0;
  const SynthCorpus c = GenCorpus(gc);
  TrialRequest req;
  req.task = TaskType::kTextIndependent;
  req.proportions = {0.5, 0.5};
  req.n_trials = 100;
  const TrialList t = GenTrials(c, req);
  CHECK(t.trials.size() == 100u);
  CHECK(t.keys.size() == 100u);
  CHECK(ValidateProtocol(t.trials, t.keys, c.metas, t.enroll).empty());
  std::map<std::string, const UttMeta *> by_id;
  for (const auto &m : c.metas) by_id[m.utt_id] = &m;
  for (const auto &[model, utts] : t.enroll)
    for (const auto &u : utts) CHECK(by_id.at(u)->language == Language::kL1);
  bool saw_l1 = false, saw_l2 = false;
  for (const auto &tr : t.trials) {
    CHECK_FALSE(tr.claimed_phrase_id.has_value());
    (by_id.at(tr.test_utt_id)->language == Language::kL1 ? saw_l1 : saw_l2) = true;
  }
  CHECK(saw_l1);
  CHECK(saw_l2);
}
