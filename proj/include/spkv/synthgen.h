// include/spkv/synthgen.h

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

#ifndef SPKV_SYNTHGEN_H_
#define SPKV_SYNTHGEN_H_

#include <cstdint>
#include <string>
#include <vector>

#include "spkv/core.h"

namespace spkv {

// Latent additive factor model for synthetic utterance vectors:
//   x = normalize(v_spk + phrase_strength * v_phrase
//                 + language_shift * d_lang [L2 only] + noise)
// Phrases in the first half of the inventory are L1, the rest L2; an
// utterance takes the language of its phrase.
struct GenConfig {
  int n_speakers = 20;
  int n_phrases = 4;
  int n_utts_per_cell = 6;  // utterances per (speaker, phrase)
  int dim = 16;
  double phrase_strength = 1.0;
  double language_shift = 0.0;
  double noise_sigma = 0.5;
  double transcript_error_rate = 0.0;
  bool phrase_labels = true;  // false: metadata omits phrase ids
  uint64_t seed = 1;

  // Throws UsageError on out-of-range fields.
  void Check() const;
};

struct SynthCorpus {
  std::vector<Embedding> embeddings;
  std::vector<UttMeta> metas;  // parallel to embeddings
  PhraseInventory inventory;
  std::vector<Vector> speaker_factors;
  std::vector<Vector> phrase_factors;
  Vector language_shift;  // unit direction d_lang
};

SynthCorpus GenCorpus(const GenConfig &config);

// Applies independent per-character edit events: with probability
// error_rate a character is substituted, deleted or followed by an inserted
// character (one third each).  error_rate 0 returns the reference.
std::string GenTranscript(const std::string &reference, double error_rate,
                          uint64_t seed);

enum class TaskType { kTextDependent, kTextIndependent };

struct TrialRequest {
  TaskType task = TaskType::kTextDependent;
  int n_trials = 1000;
  // TD: TC, TW, IC, IW shares.  TI: target, nontarget shares.
  std::vector<double> proportions = {0.25, 0.25, 0.25, 0.25};
  int enroll_utts = 3;
  uint64_t seed = 1;
};

struct TrialList {
  EnrollMap enroll;  // model_id -> enrollment utterances
  std::vector<Trial> trials;
  std::vector<TrialKey> keys;
};

// Label counts: largest-remainder rounding of proportions * n_trials.
std::vector<int> AllocateCounts(const std::vector<double> &proportions,
                                int n_trials);

// Text-dependent models are (speaker, phrase) cells enrolled from the first
// enroll_utts utterances of the cell.  Text-independent models are speakers
// enrolled from L1 utterances; test utterances are drawn from either
// language.  Throws DataError when a requested label is infeasible.
TrialList GenTrials(const SynthCorpus &corpus, const TrialRequest &request);

}  // namespace spkv

#endif  // SPKV_SYNTHGEN_H_
