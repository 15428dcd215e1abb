// include/spkv/extractor.h

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

#ifndef SPKV_EXTRACTOR_H_
#define SPKV_EXTRACTOR_H_

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "spkv/core.h"

namespace spkv {

// Two-layer feed-forward embedding network:
//   hidden = ReLU(w1 x + b1), raw = w2 hidden + b2, unit = raw / |raw|.
struct Extractor {
  Matrix w1;  // H x F
  Vector b1;  // H
  Matrix w2;  // D x H
  Vector b2;  // D

  Eigen::Index InputDim() const { return w1.cols(); }
  Eigen::Index HiddenDim() const { return w1.rows(); }
  Eigen::Index EmbedDim() const { return w2.rows(); }

  // He-style Gaussian weights, zero biases.
  static Extractor Random(int input_dim, int hidden_dim, int embed_dim,
                          uint64_t seed);
  void Check() const;
};

struct ForwardResult {
  Vector pre;   // hidden pre-activation
  Vector hidden;
  Vector raw;
  std::optional<Vector> unit;  // empty when raw has zero norm
};

// Throws DataError on a feature dimension mismatch.
ForwardResult Forward(const Extractor &net, const Vector &features);

// Additive angular margin softmax head.  Columns of `weights` are class
// centres; they are re-normalized to unit length after every update.
struct AamHead {
  Matrix weights;  // D x C
  double scale = 32.0;
  double margin = 0.2;

  Eigen::Index NumClasses() const { return weights.cols(); }
  static AamHead Random(int embed_dim, int n_classes, uint64_t seed,
                        double scale = 32.0, double margin = 0.2);
  void Renormalize();
  void Check() const;
};

// Embedding batches are matrices with one embedding per row.
struct AamLossResult {
  double loss = 0.0;
  Matrix grad_embeddings;  // N x D
  Matrix grad_weights;     // D x C
};

// Mean over the batch of -log softmax of logits s*cos(theta_j), the
// true-class logit replaced by s*cos(theta_y + m).  When theta_y + m would
// pass pi the true-class logit falls back to s*(cos(theta_y) - m*sin(m)).
// Cosines are the plain inner products of the given rows and columns.
AamLossResult AamLoss(const Matrix &embeddings, std::span<const int> labels,
                      const AamHead &head);

struct MultiHeadLossResult {
  double loss = 0.0;
  Matrix grad_embeddings;
  std::vector<Matrix> grad_heads;
};

// aam(spk) + lambda * aam(phrase); grad_heads = {speaker, phrase}.
MultiHeadLossResult SpkPlusPhraseLoss(const Matrix &embeddings,
                                      std::span<const int> spk_labels,
                                      std::span<const int> phrase_labels,
                                      const AamHead &spk_head,
                                      const AamHead &phrase_head,
                                      double lambda);

// Class index of a (speaker, phrase) pair: spk * n_phrases + phrase.
int ProductLabel(int spk_index, int phrase_index, int n_phrases);

// Each utterance is classified by the speaker head of its phrase; the loss
// is the mean over the whole batch.  grad_heads is parallel to `heads`.
MultiHeadLossResult PmtLoss(const Matrix &embeddings,
                            std::span<const int> spk_labels,
                            std::span<const int> phrase_labels,
                            std::span<const AamHead> heads);

struct Ge2eParams {
  double w = 10.0;  // kept strictly positive
  double b = -5.0;
};

struct Ge2eLossResult {
  double loss = 0.0;
  Matrix grad_embeddings;
  double grad_w = 0.0;
  double grad_b = 0.0;
};

// Generalized end-to-end softmax loss.  Rows are speaker-major:
// row s * n_utts + u.  The own-speaker centroid excludes the utterance being
// scored.  Throws UsageError unless n_speakers >= 2 and n_utts >= 2.
Ge2eLossResult Ge2eLoss(const Matrix &embeddings, int n_speakers, int n_utts,
                        const Ge2eParams &params);

inline constexpr int kPctUttsPerSpeaker = 2;

struct PctLossResult {
  double loss = 0.0;
  Matrix grad_embeddings;
  Matrix grad_head;
  double grad_w = 0.0;
  double grad_b = 0.0;
};

// aam(spk) + mu * ge2e on a batch drawn from one phrase with exactly two
// utterances per speaker (speakers in any order).  Violations throw
// DataError.
PctLossResult PctLoss(const Matrix &embeddings, std::span<const int> spk_labels,
                      std::span<const int> phrase_labels,
                      const AamHead &spk_head, const Ge2eParams &ge2e,
                      double mu);

enum class Strategy { kAamOnly, kSpkPlusPhrase, kSpkTimesPhrase, kPmt, kPct };

std::string_view StrategyName(Strategy s);
Strategy ParseStrategy(std::string_view name);  // UsageError on unknown

struct TrainConfig {
  Strategy strategy = Strategy::kAamOnly;
  int epochs = 165;
  // Exponential decay from lr_initial at the first epoch to lr_final at
  // the last.
  double lr_initial = 0.1;
  double lr_final = 1e-5;
  // Speakers per PCT batch (two utterances each); the other strategies use
  // batches of 2 * batch_speakers utterances.  0 means full batch.
  int batch_speakers = 16;
  double lambda = 1.0;  // phrase head weight for kSpkPlusPhrase
  double mu = 1.0;      // GE2E weight for kPct
  double scale = 32.0;
  double margin = 0.2;
  uint64_t seed = 1;

  void Check() const;
  double LearningRate(int epoch) const;
};

// Features with dense speaker and phrase indices (phrase -1 when absent).
struct TrainingSet {
  Matrix features;  // N x F
  std::vector<int> speaker;
  std::vector<int> phrase;
  int n_speakers = 0;
  int n_phrases = 0;

  // Speakers are indexed in sorted id order; phrases by inventory position.
  static TrainingSet FromCorpus(std::span<const Embedding> features,
                                std::span<const UttMeta> metas,
                                const PhraseInventory &inventory);
};

// Classification heads and GE2E parameters trained alongside the network.
// Layout by strategy: kAamOnly and kPct {speaker}; kSpkPlusPhrase
// {speaker, phrase}; kSpkTimesPhrase {speaker x phrase}; kPmt one speaker
// head per phrase.
struct TrainedHeads {
  std::vector<AamHead> heads;
  Ge2eParams ge2e;
};

TrainedHeads InitHeads(const TrainingSet &data, const TrainConfig &config,
                       int embed_dim);

struct BatchGradients {
  double loss = 0.0;
  Extractor net;  // gradients, same shapes as the network
  std::vector<Matrix> heads;
  double ge2e_w = 0.0;
  double ge2e_b = 0.0;
};

// Loss of one batch under the configured strategy and its gradient with
// respect to every trainable parameter.  `rows` selects batch members.
BatchGradients StrategyGradients(const Extractor &net,
                                 const TrainedHeads &heads,
                                 const TrainingSet &data,
                                 std::span<const size_t> rows,
                                 const TrainConfig &config);

struct TrainResult {
  Extractor net;
  TrainedHeads heads;
  std::vector<double> loss;  // mean batch loss per epoch
};

// Plain minibatch gradient descent.  Throws DataError when the strategy
// needs phrase labels the data lacks.
TrainResult Train(const Extractor &init, const TrainingSet &data,
                  const TrainConfig &config);

// Unit embeddings for every row of `features` (NumericError on a zero raw
// embedding).
std::vector<Embedding> ExtractEmbeddings(const Extractor &net,
                                         std::span<const Embedding> features);

}  // namespace spkv

#endif  // SPKV_EXTRACTOR_H_
