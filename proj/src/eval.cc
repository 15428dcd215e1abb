// src/eval.cc

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

#include "spkv/eval.h"

#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>

#include "spkv/error.h"

namespace spkv {

void ScoreSet::Add(const std::string &trial_id, double score) {
  if (!std::isfinite(score))
    throw DataError("non-finite score for trial " + trial_id);
  if (!index_.emplace(trial_id, ids_.size()).second)
    throw DataError("duplicate trial id " + trial_id);
  ids_.push_back(trial_id);
  scores_.push_back(score);
}

void ScoreSet::Set(const std::string &trial_id, double score) {
  auto it = index_.find(trial_id);
  if (it == index_.end()) {
    Add(trial_id, score);
    return;
  }
  if (!std::isfinite(score))
    throw DataError("non-finite score for trial " + trial_id);
  scores_[it->second] = score;
}

double ScoreSet::at(const std::string &trial_id) const {
  auto it = index_.find(trial_id);
  if (it == index_.end()) throw DataError("no score for trial " + trial_id);
  return scores_[it->second];
}

void DcfParams::Check() const {
  if (!(p_target > 0.0 && p_target < 1.0))
    throw UsageError("p_target must lie in (0, 1)");
  if (!(c_miss > 0.0) || !(c_fa > 0.0))
    throw UsageError("detection costs must be positive");
}

double DcfParams::Normalizer() const {
  return std::min(c_miss * p_target, c_fa * (1.0 - p_target));
}

void FusionWeights::Check() const {
  if (w.empty()) throw UsageError("fusion weights: empty");
  double sum = 0.0;
  for (double x : w) {
    if (!(x >= 0.0) || !std::isfinite(x))
      throw UsageError("fusion weights must be non-negative");
    sum += x;
  }
  if (std::abs(sum - 1.0) > 1e-9)
    throw UsageError("fusion weights must sum to 1");
}

SplitScores Split(const ScoreSet &scores, std::span<const TrialKey> keys) {
  std::unordered_map<std::string, TrialLabel> label_of;
  label_of.reserve(keys.size());
  for (const auto &k : keys) label_of.emplace(k.trial_id, k.label);
  SplitScores out;
  for (size_t i = 0; i < scores.size(); ++i) {
    auto it = label_of.find(scores.ids()[i]);
    if (it == label_of.end())
      throw DataError("no key for trial " + scores.ids()[i]);
    (IsTarget(it->second) ? out.target : out.nontarget)
        .push_back(scores.scores()[i]);
  }
  return out;
}

namespace {

void RequireBothClasses(std::span<const double> target,
                        std::span<const double> nontarget) {
  if (target.empty() || nontarget.empty())
    throw DataError("metric needs at least one target and one nontarget");
}

// Visits the operating point of each distinct threshold in ascending order
// (accept when score >= threshold), then the reject-all end.  The callback
// receives miss and false-alarm counts.
void SweepThresholds(std::span<const double> target,
                     std::span<const double> nontarget,
                     const std::function<void(size_t, size_t)> &visit) {
  std::vector<double> tar(target.begin(), target.end());
  std::vector<double> non(nontarget.begin(), nontarget.end());
  std::sort(tar.begin(), tar.end());
  std::sort(non.begin(), non.end());
  std::vector<double> thresholds;
  thresholds.reserve(tar.size() + non.size());
  std::merge(tar.begin(), tar.end(), non.begin(), non.end(),
             std::back_inserter(thresholds));
  thresholds.erase(std::unique(thresholds.begin(), thresholds.end()),
                   thresholds.end());
  size_t ti = 0, ni = 0;  // number of scores strictly below the threshold
  for (double thr : thresholds) {
    while (ti < tar.size() && tar[ti] < thr) ++ti;
    while (ni < non.size() && non[ni] < thr) ++ni;
    visit(ti, non.size() - ni);
  }
  visit(tar.size(), 0);
}

}  // namespace

double ComputeEer(std::span<const double> target,
                  std::span<const double> nontarget) {
  RequireBothClasses(target, nontarget);
  const double nt = static_cast<double>(target.size());
  const double nn = static_cast<double>(nontarget.size());
  double prev_miss = 0.0, prev_fa = 1.0;
  bool done = false;
  double eer = 0.0;
  SweepThresholds(target, nontarget, [&](size_t misses, size_t fas) {
    if (done) return;
    const double miss = misses / nt, fa = fas / nn;
    const double d = miss - fa;
    if (d == 0.0) {
      eer = miss;
      done = true;
    } else if (d > 0.0) {
      // The first point always has miss 0, fa 1, so a previous point exists.
      const double d_prev = prev_miss - prev_fa;
      const double lambda = -d_prev / (d - d_prev);
      eer = prev_miss + lambda * (miss - prev_miss);
      done = true;
    }
    prev_miss = miss;
    prev_fa = fa;
  });
  return eer;
}

double ComputeEer(const ScoreSet &scores, std::span<const TrialKey> keys) {
  const SplitScores s = Split(scores, keys);
  return ComputeEer(s.target, s.nontarget);
}

double ComputeMinDcf(std::span<const double> target,
                     std::span<const double> nontarget,
                     const DcfParams &params) {
  params.Check();
  RequireBothClasses(target, nontarget);
  const double nt = static_cast<double>(target.size());
  const double nn = static_cast<double>(nontarget.size());
  const double norm = params.Normalizer();
  auto cost = [&](double p_miss, double p_fa) {
    return (params.c_miss * params.p_target * p_miss +
            params.c_fa * (1.0 - params.p_target) * p_fa) /
           norm;
  };
  double best = cost(0.0, 1.0);  // accept all
  SweepThresholds(target, nontarget, [&](size_t misses, size_t fas) {
    best = std::min(best, cost(misses / nt, fas / nn));
  });
  return best;
}

double ComputeMinDcf(const ScoreSet &scores, std::span<const TrialKey> keys,
                     const DcfParams &params) {
  const SplitScores s = Split(scores, keys);
  return ComputeMinDcf(s.target, s.nontarget, params);
}

size_t Levenshtein(std::string_view a, std::string_view b) {
  if (a.size() < b.size()) std::swap(a, b);
  std::vector<size_t> row(b.size() + 1);
  for (size_t j = 0; j <= b.size(); ++j) row[j] = j;
  for (size_t i = 1; i <= a.size(); ++i) {
    size_t diag = row[0];
    row[0] = i;
    for (size_t j = 1; j <= b.size(); ++j) {
      const size_t up = row[j];
      row[j] = std::min({up + 1, row[j - 1] + 1,
                         diag + (a[i - 1] == b[j - 1] ? 0 : 1)});
      diag = up;
    }
  }
  return row[b.size()];
}

std::string ClassifyPhrase(std::string_view transcript,
                           const PhraseInventory &inventory) {
  if (inventory.empty()) throw UsageError("classify: empty phrase inventory");
  size_t best = 0;
  size_t best_dist = std::numeric_limits<size_t>::max();
  for (size_t i = 0; i < inventory.size(); ++i) {
    const size_t d = Levenshtein(transcript, inventory.at(i).text);
    if (d < best_dist) {
      best_dist = d;
      best = i;
    }
  }
  return inventory.at(best).phrase_id;
}

ScoreSet ApplyPhraseFilter(
    const ScoreSet &scores, std::span<const Trial> trials,
    const std::unordered_map<std::string, std::string> &classified_phrase,
    double floor) {
  std::unordered_map<std::string, const Trial *> trial_of;
  for (const auto &t : trials) trial_of.emplace(t.trial_id, &t);
  ScoreSet out;
  for (size_t i = 0; i < scores.size(); ++i) {
    const std::string &id = scores.ids()[i];
    auto t = trial_of.find(id);
    if (t == trial_of.end()) throw DataError("no trial entry for " + id);
    if (!t->second->claimed_phrase_id)
      throw DataError("trial " + id + " has no claimed phrase");
    auto c = classified_phrase.find(t->second->test_utt_id);
    if (c == classified_phrase.end())
      throw DataError("missing phrase classification for " +
                      t->second->test_utt_id);
    const bool mismatch = c->second != *t->second->claimed_phrase_id;
    out.Add(id, mismatch ? floor : scores.scores()[i]);
  }
  return out;
}

ScoreSet Fuse(std::span<const ScoreSet> score_sets,
              const FusionWeights &weights) {
  if (score_sets.empty()) throw UsageError("fuse: no score sets");
  weights.Check();
  if (weights.w.size() != score_sets.size())
    throw UsageError("fuse: weight count does not match system count");
  const ScoreSet &first = score_sets.front();
  for (const auto &s : score_sets) {
    if (s.size() != first.size()) throw DataError("trial-id mismatch");
    for (const auto &id : first.ids())
      if (!s.Contains(id)) throw DataError("trial-id mismatch: " + id);
  }
  ScoreSet out;
  for (size_t i = 0; i < first.size(); ++i) {
    const std::string &id = first.ids()[i];
    double v = 0.0;
    for (size_t k = 0; k < score_sets.size(); ++k)
      v += weights.w[k] * score_sets[k].at(id);
    out.Add(id, v);
  }
  return out;
}

FusionWeights TuneWeights(std::span<const ScoreSet> dev_sets,
                          std::span<const TrialKey> dev_keys,
                          const DcfParams &params, double grid_step) {
  if (dev_sets.empty()) throw UsageError("tune_weights: empty system list");
  if (!(grid_step > 0.0 && grid_step <= 1.0))
    throw UsageError("tune_weights: grid step must lie in (0, 1]");
  const double steps = std::round(1.0 / grid_step);
  if (std::abs(steps * grid_step - 1.0) > 1e-9)
    throw UsageError("tune_weights: grid step must divide 1");
  const int n = static_cast<int>(steps);
  const size_t k = dev_sets.size();

  FusionWeights best;
  double best_dcf = std::numeric_limits<double>::infinity();
  double best_eer = std::numeric_limits<double>::infinity();
  std::vector<int> counts(k, 0);

  // Compositions of n into k parts in ascending lexicographic order, so the
  // first of several exact ties is the lexicographically smallest.
  std::function<void(size_t, int)> visit = [&](size_t pos, int remaining) {
    if (pos + 1 == k) {
      counts[pos] = remaining;
      FusionWeights fw;
      for (int c : counts) fw.w.push_back(static_cast<double>(c) / n);
      const ScoreSet fused = Fuse(dev_sets, fw);
      const SplitScores s = Split(fused, dev_keys);
      const double dcf = ComputeMinDcf(s.target, s.nontarget, params);
      if (dcf < best_dcf) {
        best_dcf = dcf;
        best_eer = ComputeEer(s.target, s.nontarget);
        best = fw;
      } else if (dcf == best_dcf) {
        const double eer = ComputeEer(s.target, s.nontarget);
        if (eer < best_eer) {
          best_eer = eer;
          best = fw;
        }
      }
      return;
    }
    for (int c = 0; c <= remaining; ++c) {
      counts[pos] = c;
      visit(pos + 1, remaining - c);
    }
  };
  visit(0, n);
  return best;
}

}  // namespace spkv
