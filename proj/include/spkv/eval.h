// include/spkv/eval.h

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

#ifndef SPKV_EVAL_H_
#define SPKV_EVAL_H_

#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "spkv/core.h"

namespace spkv {

// Trial scores in insertion order with unique ids and finite values.
class ScoreSet {
 public:
  // Throws DataError on a duplicate id or a non-finite score.
  void Add(const std::string &trial_id, double score);
  // Overwrites an existing entry.
  void Set(const std::string &trial_id, double score);

  size_t size() const { return ids_.size(); }
  bool empty() const { return ids_.empty(); }
  bool Contains(const std::string &trial_id) const {
    return index_.count(trial_id) != 0;
  }
  double at(const std::string &trial_id) const;
  const std::vector<std::string> &ids() const { return ids_; }
  const std::vector<double> &scores() const { return scores_; }

  bool operator==(const ScoreSet &other) const {
    return ids_ == other.ids_ && scores_ == other.scores_;
  }

 private:
  std::vector<std::string> ids_;
  std::vector<double> scores_;
  std::unordered_map<std::string, size_t> index_;
};

struct DcfParams {
  double p_target = 0.01;
  double c_miss = 10.0;
  double c_fa = 1.0;

  void Check() const;
  // min(c_miss * p_target, c_fa * (1 - p_target))
  double Normalizer() const;
};

struct FusionWeights {
  std::vector<double> w;
  // Throws UsageError unless every weight is >= 0 and they sum to 1 (1e-9).
  void Check() const;
};

// Target and nontarget score lists for a keyed score set.  TC and TGT are
// targets; TW, IC, IW and NTG are nontargets.  Every scored trial must have
// a key (DataError otherwise).
struct SplitScores {
  std::vector<double> target;
  std::vector<double> nontarget;
};
SplitScores Split(const ScoreSet &scores, std::span<const TrialKey> keys);

// Equal error rate.  The threshold sweep visits every distinct score (accept
// if score >= threshold) plus the reject-all end; the crossing of the miss
// and false-alarm curves is linearly interpolated between adjacent
// operating points.  Throws DataError if either class is empty.
double ComputeEer(std::span<const double> target,
                  std::span<const double> nontarget);
double ComputeEer(const ScoreSet &scores, std::span<const TrialKey> keys);

// Normalized minimum detection cost over thresholds at every observed
// score plus the accept-all and reject-all ends.
double ComputeMinDcf(std::span<const double> target,
                     std::span<const double> nontarget,
                     const DcfParams &params);
double ComputeMinDcf(const ScoreSet &scores, std::span<const TrialKey> keys,
                     const DcfParams &params);

// Unit-cost edit distance over bytes.
size_t Levenshtein(std::string_view a, std::string_view b);

// Phrase whose reference text is nearest in edit distance; the first
// inventory entry wins ties.  Throws UsageError for an empty inventory.
std::string ClassifyPhrase(std::string_view transcript,
                           const PhraseInventory &inventory);

inline constexpr double kDefaultFilterFloor = -1000.0;

// Floors the score of every trial whose test utterance was classified as a
// phrase other than the claimed one.  Throws DataError when a trial has no
// claimed phrase or its test utterance has no classification.
ScoreSet ApplyPhraseFilter(
    const ScoreSet &scores, std::span<const Trial> trials,
    const std::unordered_map<std::string, std::string> &classified_phrase,
    double floor = kDefaultFilterFloor);

// Per-trial weighted sum.  Output order follows the first set.  Throws
// DataError ("trial-id mismatch") unless all sets cover identical ids.
ScoreSet Fuse(std::span<const ScoreSet> score_sets,
              const FusionWeights &weights);

// Exhaustive simplex-grid search for the weights minimizing dev minDCF.
// Ties go to lower dev EER, then to the lexicographically smallest weights.
FusionWeights TuneWeights(std::span<const ScoreSet> dev_sets,
                          std::span<const TrialKey> dev_keys,
                          const DcfParams &params, double grid_step);

}  // namespace spkv

#endif  // SPKV_EVAL_H_
