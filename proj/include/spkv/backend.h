// include/spkv/backend.h

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

#ifndef SPKV_BACKEND_H_
#define SPKV_BACKEND_H_

#include <map>
#include <span>
#include <string>
#include <vector>

#include "spkv/core.h"

namespace spkv {

// Cosine similarity; throws NumericError for a zero vector and DataError on
// dimension mismatch.
double CosineScore(const Vector &e, const Vector &t);

// Two-covariance PLDA: x = y + w with speaker variable y ~ N(mean, between)
// and residual w ~ N(0, within).
struct PldaModel {
  Vector mean;
  Matrix between;  // symmetric PSD
  Matrix within;   // symmetric PD

  Eigen::Index Dim() const { return mean.size(); }
  // Throws NumericError if the covariances are not symmetric PSD / PD.
  void Check() const;
};

struct PldaTrainResult {
  PldaModel model;
  // Marginal log-likelihood of the training data after initialization and
  // after each EM iteration (size iters + 1).
  std::vector<double> loglike;
};

struct PldaEmOptions {
  int iters = 20;
  // Added to the diagonal of both covariances as ridge * trace(S) / D, where
  // S is the total scatter of the data.  Negative selects the default 1e-6.
  double ridge = -1.0;
};

// EM training of the two-covariance model.  Labels are arbitrary speaker
// ids parallel to `data`.  Requires two speakers and at least one speaker
// with two utterances (DataError); identical data is reported as
// NumericError.
PldaTrainResult PldaEmTrain(std::span<const Vector> data,
                            std::span<const std::string> speaker_labels,
                            const PldaEmOptions &opts = {});

// Marginal log-likelihood of labelled data under a model.
double PldaLogLikelihood(const PldaModel &model, std::span<const Vector> data,
                         std::span<const std::string> speaker_labels);

// log p(e, t | same speaker) - log p(e, t | different speakers), evaluated
// as the difference of two joint Gaussian log densities.
double PldaLlrScore(const PldaModel &model, const Vector &e, const Vector &t);

struct PhrasePldaBank {
  std::map<std::string, PldaModel> models;
  // phrase_id -> reason, for phrases that could not be trained.
  std::map<std::string, std::string> failures;
};

// One independently trained model per phrase label.
PhrasePldaBank TrainPhrasePldaBank(std::span<const Vector> data,
                                   std::span<const std::string> speaker_labels,
                                   std::span<const std::string> phrase_labels,
                                   const PldaEmOptions &opts = {});

}  // namespace spkv

#endif  // SPKV_BACKEND_H_
