// include/spkv/nplda.h

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

#ifndef SPKV_NPLDA_H_
#define SPKV_NPLDA_H_

#include <span>
#include <string>
#include <vector>

#include "spkv/backend.h"
#include "spkv/eval.h"

namespace spkv {

// Quadratic pair scorer
//   s(e, t) = e' L t + e' G e + t' G t + c'(e + t) + k
// with L used through its symmetric part and G symmetric.
struct NpldaParams {
  Matrix cross;   // L
  Matrix self;    // G
  Vector linear;  // c
  double offset = 0.0;  // k

  Eigen::Index Dim() const { return linear.size(); }
};

// Expands the closed-form PLDA log-likelihood ratio into quadratic form, so
// NpldaScore(InitFromPlda(m), e, t) == PldaLlrScore(m, e, t).
NpldaParams InitFromPlda(const PldaModel &model);

double NpldaScore(const NpldaParams &params, const Vector &e, const Vector &t);

struct SoftDetCostResult {
  double loss = 0.0;
  std::vector<double> grad_scores;
  double grad_threshold = 0.0;
};

// Differentiable detection cost: sigmoid-smoothed miss and false-alarm
// rates at threshold `threshold` with sharpness `alpha`, normalized like
// minDCF.  Labels are true for targets.  Throws DataError on single-class
// input.
SoftDetCostResult SoftDetCost(std::span<const double> scores,
                              std::span<const bool> is_target,
                              double threshold, double alpha,
                              const DcfParams &cost);

struct NpldaTrainConfig {
  double learning_rate = 5e-5;
  int epochs = 5;
  double alpha = 10.0;
  DcfParams cost;
  // Initial threshold; when unset, the minDCF threshold of the initial
  // scores on the training pairs.
  std::optional<double> threshold;
};

struct NpldaPair {
  Vector enroll;
  Vector test;
  std::string enroll_phrase;
  std::string test_phrase;
  bool is_target = false;
};

struct NpldaTrainResult {
  NpldaParams params;
  double threshold = 0.0;
  // Soft cost before training and after each epoch (size epochs + 1).
  std::vector<double> loss;
};

// Full-batch gradient descent on the soft detection cost.  Every pair must
// share one phrase on both sides (DataError before any update otherwise).
NpldaTrainResult TrainNplda(const NpldaParams &init,
                            std::span<const NpldaPair> pairs,
                            const NpldaTrainConfig &config);

// Threshold at which the empirical detection cost is minimal (midpoint
// between the adjacent scores bracketing the best operating point).
double MinDcfThreshold(std::span<const double> scores,
                       std::span<const bool> is_target,
                       const DcfParams &cost);

}  // namespace spkv

#endif  // SPKV_NPLDA_H_
