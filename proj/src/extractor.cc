// src/extractor.cc

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

#include "spkv/extractor.h"

#include <algorithm>
#include <cmath>
#include <map>
#include <numbers>
#include <numeric>

#include "spkv/error.h"
#include "spkv/rng.h"

namespace spkv {

namespace {

Matrix GaussianMatrix(Rng &rng, Eigen::Index rows, Eigen::Index cols,
                      double stddev) {
  Matrix m(rows, cols);
  // Row-major fill order keeps the draw sequence independent of storage.
  for (Eigen::Index r = 0; r < rows; ++r)
    for (Eigen::Index c = 0; c < cols; ++c) m(r, c) = stddev * rng.Normal();
  return m;
}

void CheckFinite(const Matrix &m, const char *what) {
  if (!m.allFinite()) throw NumericError(std::string(what) + ": non-finite");
}

}  // namespace

Extractor Extractor::Random(int input_dim, int hidden_dim, int embed_dim,
                            uint64_t seed) {
  if (input_dim < 1 || hidden_dim < 1 || embed_dim < 1)
    throw UsageError("extractor: sizes must be positive");
  Rng rng(seed);
  Extractor net;
  net.w1 = GaussianMatrix(rng, hidden_dim, input_dim,
                          std::sqrt(2.0 / input_dim));
  net.b1 = Vector::Zero(hidden_dim);
  net.w2 = GaussianMatrix(rng, embed_dim, hidden_dim,
                          std::sqrt(1.0 / hidden_dim));
  net.b2 = Vector::Zero(embed_dim);
  return net;
}

void Extractor::Check() const {
  if (b1.size() != w1.rows() || w2.cols() != w1.rows() ||
      b2.size() != w2.rows() || w1.size() == 0 || w2.size() == 0)
    throw DataError("extractor: inconsistent layer sizes");
  if (!w1.allFinite() || !b1.allFinite() || !w2.allFinite() ||
      !b2.allFinite())
    throw NumericError("extractor: non-finite parameters");
}

ForwardResult Forward(const Extractor &net, const Vector &features) {
  if (features.size() != net.InputDim())
    throw DataError("extractor: feature dimension " +
                    std::to_string(features.size()) + ", expected " +
                    std::to_string(net.InputDim()));
  ForwardResult r;
  r.pre = net.w1 * features + net.b1;
  r.hidden = r.pre.cwiseMax(0.0);
  r.raw = net.w2 * r.hidden + net.b2;
  const double norm = r.raw.norm();
  if (norm > 0.0 && std::isfinite(norm)) r.unit = r.raw / norm;
  return r;
}

AamHead AamHead::Random(int embed_dim, int n_classes, uint64_t seed,
                        double scale, double margin) {
  if (embed_dim < 1 || n_classes < 1)
    throw UsageError("AAM head: sizes must be positive");
  Rng rng(seed);
  AamHead h;
  h.weights = GaussianMatrix(rng, embed_dim, n_classes, 1.0);
  h.scale = scale;
  h.margin = margin;
  h.Renormalize();
  h.Check();
  return h;
}

void AamHead::Renormalize() {
  for (Eigen::Index c = 0; c < weights.cols(); ++c) {
    const double n = weights.col(c).norm();
    if (!(n > 0.0)) throw NumericError("AAM head: zero-norm class column");
    weights.col(c) /= n;
  }
}

void AamHead::Check() const {
  if (!(scale > 0.0)) throw UsageError("AAM head: scale must be positive");
  if (!(margin >= 0.0 && margin < std::numbers::pi / 2))
    throw UsageError("AAM head: margin must lie in [0, pi/2)");
  CheckFinite(weights, "AAM head");
}

AamLossResult AamLoss(const Matrix &embeddings, std::span<const int> labels,
                      const AamHead &head) {
  head.Check();
  CheckFinite(embeddings, "AAM loss embeddings");
  const Eigen::Index n = embeddings.rows(), n_cls = head.NumClasses();
  if (static_cast<size_t>(n) != labels.size())
    throw DataError("AAM loss: label count does not match batch");
  if (embeddings.cols() != head.weights.rows())
    throw DataError("AAM loss: embedding and head dimensions differ");
  if (n == 0) throw DataError("AAM loss: empty batch");
  for (int y : labels)
    if (y < 0 || y >= n_cls) throw DataError("AAM loss: label out of range");

  const double s = head.scale, m = head.margin;
  const double cos_m = std::cos(m), sin_m = std::sin(m);
  const double threshold = std::cos(std::numbers::pi - m);
  const double fallback = m * sin_m;

  const Matrix cosines = embeddings * head.weights;  // N x C
  Matrix d_cos(n, n_cls);
  AamLossResult r;
  for (Eigen::Index i = 0; i < n; ++i) {
    const int y = labels[i];
    const double c = cosines(i, y);
    double phi, dphi;
    if (c > threshold) {
      const double sin_t = std::sqrt(std::max(0.0, 1.0 - c * c));
      phi = c * cos_m - sin_t * sin_m;
      dphi = cos_m + sin_m * c / std::max(sin_t, 1e-12);
    } else {
      phi = c - fallback;
      dphi = 1.0;
    }
    Vector logits = s * cosines.row(i).transpose();
    logits(y) = s * phi;
    const double mx = logits.maxCoeff();
    const Vector ex = (logits.array() - mx).exp().matrix();
    const double z = ex.sum();
    r.loss += std::log(z) + mx - logits(y);
    Vector d_logit = ex / z;
    d_logit(y) -= 1.0;
    d_logit /= static_cast<double>(n);
    d_cos.row(i) = s * d_logit.transpose();
    d_cos(i, y) *= dphi;
  }
  r.loss /= static_cast<double>(n);
  r.grad_embeddings = d_cos * head.weights.transpose();
  r.grad_weights = embeddings.transpose() * d_cos;
  return r;
}

MultiHeadLossResult SpkPlusPhraseLoss(const Matrix &embeddings,
                                      std::span<const int> spk_labels,
                                      std::span<const int> phrase_labels,
                                      const AamHead &spk_head,
                                      const AamHead &phrase_head,
                                      double lambda) {
  if (phrase_labels.size() != spk_labels.size())
    throw DataError("spk+phrase loss: missing phrase labels");
  if (!(lambda >= 0.0)) throw UsageError("spk+phrase loss: lambda < 0");
  AamLossResult spk = AamLoss(embeddings, spk_labels, spk_head);
  MultiHeadLossResult r;
  r.loss = spk.loss;
  r.grad_embeddings = std::move(spk.grad_embeddings);
  if (lambda == 0.0) {
    r.grad_heads = {std::move(spk.grad_weights),
                    Matrix::Zero(phrase_head.weights.rows(),
                                 phrase_head.weights.cols())};
    return r;
  }
  AamLossResult ph = AamLoss(embeddings, phrase_labels, phrase_head);
  r.loss += lambda * ph.loss;
  r.grad_embeddings += lambda * ph.grad_embeddings;
  r.grad_heads = {std::move(spk.grad_weights), lambda * ph.grad_weights};
  return r;
}

int ProductLabel(int spk_index, int phrase_index, int n_phrases) {
  if (n_phrases < 1 || spk_index < 0 || phrase_index < 0 ||
      phrase_index >= n_phrases)
    throw UsageError("product label: index out of range");
  return spk_index * n_phrases + phrase_index;
}

MultiHeadLossResult PmtLoss(const Matrix &embeddings,
                            std::span<const int> spk_labels,
                            std::span<const int> phrase_labels,
                            std::span<const AamHead> heads) {
  const Eigen::Index n = embeddings.rows();
  if (spk_labels.size() != static_cast<size_t>(n) ||
      phrase_labels.size() != static_cast<size_t>(n))
    throw DataError("PMT loss: label count does not match batch");
  std::map<int, std::vector<Eigen::Index>> groups;
  for (Eigen::Index i = 0; i < n; ++i) {
    const int p = phrase_labels[i];
    if (p < 0 || static_cast<size_t>(p) >= heads.size())
      throw DataError("PMT loss: no head for phrase index " +
                      std::to_string(p));
    groups[p].push_back(i);
  }
  MultiHeadLossResult r;
  r.grad_embeddings = Matrix::Zero(n, embeddings.cols());
  for (const auto &h : heads)
    r.grad_heads.push_back(Matrix::Zero(h.weights.rows(), h.weights.cols()));
  for (const auto &[p, rows] : groups) {
    const Eigen::Index k = static_cast<Eigen::Index>(rows.size());
    Matrix sub(k, embeddings.cols());
    std::vector<int> labels(k);
    for (Eigen::Index j = 0; j < k; ++j) {
      sub.row(j) = embeddings.row(rows[j]);
      labels[j] = spk_labels[rows[j]];
    }
    const AamLossResult g = AamLoss(sub, labels, heads[p]);
    const double share = static_cast<double>(k) / static_cast<double>(n);
    r.loss += share * g.loss;
    for (Eigen::Index j = 0; j < k; ++j)
      r.grad_embeddings.row(rows[j]) = share * g.grad_embeddings.row(j);
    r.grad_heads[p] = share * g.grad_weights;
  }
  return r;
}

Ge2eLossResult Ge2eLoss(const Matrix &embeddings, int n_speakers, int n_utts,
                        const Ge2eParams &params) {
  if (n_speakers < 2 || n_utts < 2)
    throw UsageError("GE2E: need at least two speakers and two utterances");
  if (embeddings.rows() != static_cast<Eigen::Index>(n_speakers) * n_utts)
    throw DataError("GE2E: batch size does not match speakers x utterances");
  if (!(params.w > 0.0)) throw UsageError("GE2E: scale w must be positive");
  CheckFinite(embeddings, "GE2E embeddings");
  const Eigen::Index d = embeddings.cols();
  const double u_cnt = n_utts;

  Matrix sums = Matrix::Zero(n_speakers, d);
  for (int s = 0; s < n_speakers; ++s)
    for (int u = 0; u < n_utts; ++u) sums.row(s) += embeddings.row(s * n_utts + u);

  Ge2eLossResult r;
  r.grad_embeddings = Matrix::Zero(embeddings.rows(), d);
  Matrix grad_sums = Matrix::Zero(n_speakers, d);  // via full centroids
  const double n_rows = static_cast<double>(embeddings.rows());

  for (int j = 0; j < n_speakers; ++j) {
    for (int u = 0; u < n_utts; ++u) {
      const Eigen::Index row = j * n_utts + u;
      const Vector e = embeddings.row(row).transpose();
      const double e_norm = e.norm();
      if (!(e_norm > 0.0)) throw NumericError("GE2E: zero embedding");
      std::vector<Vector> cents(n_speakers);
      std::vector<double> cosv(n_speakers), c_norm(n_speakers);
      Vector logits(n_speakers);
      for (int k = 0; k < n_speakers; ++k) {
        cents[k] = k == j ? Vector((sums.row(k).transpose() - e) / (u_cnt - 1))
                          : Vector(sums.row(k).transpose() / u_cnt);
        c_norm[k] = cents[k].norm();
        if (!(c_norm[k] > 0.0)) throw NumericError("GE2E: zero centroid");
        cosv[k] = e.dot(cents[k]) / (e_norm * c_norm[k]);
        logits(k) = params.w * cosv[k] + params.b;
      }
      const double mx = logits.maxCoeff();
      const Vector ex = (logits.array() - mx).exp().matrix();
      const double z = ex.sum();
      r.loss += std::log(z) + mx - logits(j);
      Vector d_logit = ex / z;
      d_logit(j) -= 1.0;
      d_logit /= n_rows;
      for (int k = 0; k < n_speakers; ++k) {
        const double g = d_logit(k);
        r.grad_w += g * cosv[k];
        r.grad_b += g;
        const double gc = g * params.w;  // d loss / d cos
        const Vector d_e = cents[k] / (e_norm * c_norm[k]) -
                           cosv[k] * e / (e_norm * e_norm);
        const Vector d_c = e / (e_norm * c_norm[k]) -
                           cosv[k] * cents[k] / (c_norm[k] * c_norm[k]);
        r.grad_embeddings.row(row) += gc * d_e.transpose();
        if (k == j) {
          // Exclusive centroid: every other utterance of speaker j.
          const Vector share = gc * d_c / (u_cnt - 1);
          grad_sums.row(k) += share.transpose();
          r.grad_embeddings.row(row) -= share.transpose();
        } else {
          grad_sums.row(k) += (gc * d_c / u_cnt).transpose();
        }
      }
    }
  }
  r.loss /= n_rows;
  for (int s = 0; s < n_speakers; ++s)
    for (int u = 0; u < n_utts; ++u)
      r.grad_embeddings.row(s * n_utts + u) += grad_sums.row(s);
  return r;
}

PctLossResult PctLoss(const Matrix &embeddings, std::span<const int> spk_labels,
                      std::span<const int> phrase_labels,
                      const AamHead &spk_head, const Ge2eParams &ge2e,
                      double mu) {
  const Eigen::Index n = embeddings.rows();
  if (spk_labels.size() != static_cast<size_t>(n) ||
      phrase_labels.size() != static_cast<size_t>(n))
    throw DataError("PCT loss: label count does not match batch");
  if (!(mu >= 0.0)) throw UsageError("PCT loss: mu < 0");
  for (Eigen::Index i = 1; i < n; ++i)
    if (phrase_labels[i] != phrase_labels[0])
      throw DataError("PCT loss: same-phrase constraint violated");
  std::vector<int> order;  // speakers in order of first appearance
  std::map<int, std::vector<Eigen::Index>> rows;
  for (Eigen::Index i = 0; i < n; ++i) {
    auto &r = rows[spk_labels[i]];
    if (r.empty()) order.push_back(spk_labels[i]);
    r.push_back(i);
  }
  for (const auto &kv : rows)
    if (kv.second.size() != static_cast<size_t>(kPctUttsPerSpeaker))
      throw DataError("PCT loss: each speaker needs exactly two utterances");

  AamLossResult aam = AamLoss(embeddings, spk_labels, spk_head);
  PctLossResult r;
  r.loss = aam.loss;
  r.grad_embeddings = std::move(aam.grad_embeddings);
  r.grad_head = std::move(aam.grad_weights);
  if (mu == 0.0) return r;

  Matrix grouped(n, embeddings.cols());
  std::vector<Eigen::Index> src;
  for (int spk : order)
    for (Eigen::Index i : rows[spk]) {
      grouped.row(static_cast<Eigen::Index>(src.size())) = embeddings.row(i);
      src.push_back(i);
    }
  const Ge2eLossResult g =
      Ge2eLoss(grouped, static_cast<int>(order.size()), kPctUttsPerSpeaker, ge2e);
  r.loss += mu * g.loss;
  for (size_t k = 0; k < src.size(); ++k)
    r.grad_embeddings.row(src[k]) += mu * g.grad_embeddings.row(k);
  r.grad_w = mu * g.grad_w;
  r.grad_b = mu * g.grad_b;
  return r;
}

std::string_view StrategyName(Strategy s) {
  switch (s) {
    case Strategy::kAamOnly: return "aam";
    case Strategy::kSpkPlusPhrase: return "spk+phrase";
    case Strategy::kSpkTimesPhrase: return "spkxphrase";
    case Strategy::kPmt: return "pmt";
    case Strategy::kPct: return "pct";
  }
  return "?";
}

Strategy ParseStrategy(std::string_view name) {
  for (Strategy s : {Strategy::kAamOnly, Strategy::kSpkPlusPhrase,
                     Strategy::kSpkTimesPhrase, Strategy::kPmt, Strategy::kPct})
    if (StrategyName(s) == name) return s;
  throw UsageError("unknown training strategy '" + std::string(name) + "'");
}

void TrainConfig::Check() const {
  if (epochs < 0) throw UsageError("train: epochs must be >= 0");
  if (!(lr_initial > 0.0) || !(lr_final > 0.0))
    throw UsageError("train: learning rates must be positive");
  if (batch_speakers < 0) throw UsageError("train: batch_speakers < 0");
  if (!(lambda >= 0.0) || !(mu >= 0.0))
    throw UsageError("train: lambda and mu must be >= 0");
}

double TrainConfig::LearningRate(int epoch) const {
  if (epochs <= 1) return lr_initial;
  const double frac = static_cast<double>(epoch) / (epochs - 1);
  return lr_initial * std::pow(lr_final / lr_initial, frac);
}

TrainingSet TrainingSet::FromCorpus(std::span<const Embedding> features,
                                    std::span<const UttMeta> metas,
                                    const PhraseInventory &inventory) {
  if (features.size() != metas.size())
    throw DataError("training set: features and metadata differ in length");
  if (features.empty()) throw DataError("training set: no data");
  TrainingSet t;
  std::map<std::string, int> spk_index;
  for (const auto &m : metas) spk_index.emplace(m.speaker_id, 0);
  int next = 0;
  for (auto &kv : spk_index) kv.second = next++;
  t.n_speakers = next;
  t.n_phrases = static_cast<int>(inventory.size());
  const Eigen::Index f = features.front().vec.size();
  t.features.resize(static_cast<Eigen::Index>(features.size()), f);
  for (size_t i = 0; i < features.size(); ++i) {
    if (features[i].utt_id != metas[i].utt_id)
      throw DataError("training set: feature/metadata order differs at " +
                      features[i].utt_id);
    if (features[i].vec.size() != f)
      throw DataError("training set: feature dimension mismatch");
    t.features.row(static_cast<Eigen::Index>(i)) = features[i].vec.transpose();
    t.speaker.push_back(spk_index.at(metas[i].speaker_id));
    int p = -1;
    if (metas[i].phrase_id) {
      auto idx = inventory.IndexOf(*metas[i].phrase_id);
      if (!idx)
        throw DataError("training set: phrase " + *metas[i].phrase_id +
                        " not in inventory");
      p = static_cast<int>(*idx);
    }
    t.phrase.push_back(p);
  }
  return t;
}

namespace {

bool NeedsPhrases(Strategy s) { return s != Strategy::kAamOnly; }

}  // namespace

TrainedHeads InitHeads(const TrainingSet &data, const TrainConfig &config,
                       int embed_dim) {
  Rng rng(config.seed ^ 0x5bd1e995ULL);
  TrainedHeads h;
  auto head = [&](int classes) {
    return AamHead::Random(embed_dim, classes, rng.Fork(), config.scale,
                           config.margin);
  };
  switch (config.strategy) {
    case Strategy::kAamOnly:
    case Strategy::kPct:
      h.heads.push_back(head(data.n_speakers));
      break;
    case Strategy::kSpkPlusPhrase:
      h.heads.push_back(head(data.n_speakers));
      h.heads.push_back(head(data.n_phrases));
      break;
    case Strategy::kSpkTimesPhrase:
      h.heads.push_back(head(data.n_speakers * data.n_phrases));
      break;
    case Strategy::kPmt:
      for (int p = 0; p < data.n_phrases; ++p)
        h.heads.push_back(head(data.n_speakers));
      break;
  }
  return h;
}

BatchGradients StrategyGradients(const Extractor &net,
                                 const TrainedHeads &heads,
                                 const TrainingSet &data,
                                 std::span<const size_t> rows,
                                 const TrainConfig &config) {
  const Eigen::Index n = static_cast<Eigen::Index>(rows.size());
  const Eigen::Index d = net.EmbedDim();
  std::vector<ForwardResult> fwd;
  fwd.reserve(rows.size());
  Matrix emb(n, d);
  std::vector<int> spk(n), ph(n);
  for (Eigen::Index i = 0; i < n; ++i) {
    const size_t r = rows[i];
    fwd.push_back(Forward(net, data.features.row(r).transpose()));
    if (!fwd.back().unit)
      throw NumericError("extractor produced a zero embedding");
    emb.row(i) = fwd.back().unit->transpose();
    spk[i] = data.speaker[r];
    ph[i] = data.phrase[r];
  }

  BatchGradients g;
  Matrix g_emb;
  switch (config.strategy) {
    case Strategy::kAamOnly: {
      AamLossResult r = AamLoss(emb, spk, heads.heads.at(0));
      g.loss = r.loss;
      g_emb = std::move(r.grad_embeddings);
      g.heads.push_back(std::move(r.grad_weights));
      break;
    }
    case Strategy::kSpkPlusPhrase: {
      MultiHeadLossResult r = SpkPlusPhraseLoss(
          emb, spk, ph, heads.heads.at(0), heads.heads.at(1), config.lambda);
      g.loss = r.loss;
      g_emb = std::move(r.grad_embeddings);
      g.heads = std::move(r.grad_heads);
      break;
    }
    case Strategy::kSpkTimesPhrase: {
      std::vector<int> prod(n);
      for (Eigen::Index i = 0; i < n; ++i)
        prod[i] = ProductLabel(spk[i], ph[i], data.n_phrases);
      AamLossResult r = AamLoss(emb, prod, heads.heads.at(0));
      g.loss = r.loss;
      g_emb = std::move(r.grad_embeddings);
      g.heads.push_back(std::move(r.grad_weights));
      break;
    }
    case Strategy::kPmt: {
      MultiHeadLossResult r = PmtLoss(emb, spk, ph, heads.heads);
      g.loss = r.loss;
      g_emb = std::move(r.grad_embeddings);
      g.heads = std::move(r.grad_heads);
      break;
    }
    case Strategy::kPct: {
      PctLossResult r =
          PctLoss(emb, spk, ph, heads.heads.at(0), heads.ge2e, config.mu);
      g.loss = r.loss;
      g_emb = std::move(r.grad_embeddings);
      g.heads.push_back(std::move(r.grad_head));
      g.ge2e_w = r.grad_w;
      g.ge2e_b = r.grad_b;
      break;
    }
  }

  // Back-propagate through length normalization and both layers.
  g.net.w1 = Matrix::Zero(net.w1.rows(), net.w1.cols());
  g.net.b1 = Vector::Zero(net.b1.size());
  g.net.w2 = Matrix::Zero(net.w2.rows(), net.w2.cols());
  g.net.b2 = Vector::Zero(net.b2.size());
  for (Eigen::Index i = 0; i < n; ++i) {
    const ForwardResult &f = fwd[i];
    const Vector &u = *f.unit;
    const Vector g_unit = g_emb.row(i).transpose();
    const Vector g_raw = (g_unit - u * u.dot(g_unit)) / f.raw.norm();
    g.net.w2.noalias() += g_raw * f.hidden.transpose();
    g.net.b2 += g_raw;
    Vector g_pre = net.w2.transpose() * g_raw;
    for (Eigen::Index h = 0; h < g_pre.size(); ++h)
      if (f.pre(h) <= 0.0) g_pre(h) = 0.0;
    g.net.w1.noalias() += g_pre * data.features.row(rows[i]);
    g.net.b1 += g_pre;
  }
  return g;
}

namespace {

void Shuffle(std::vector<size_t> &v, Rng &rng) {
  for (size_t i = v.size(); i > 1; --i) std::swap(v[i - 1], v[rng.UniformInt(i)]);
}

// Same-phrase batches with two utterances for each sampled speaker.
class PctSampler {
 public:
  PctSampler(const TrainingSet &data, int batch_speakers)
      : batch_speakers_(batch_speakers) {
    std::map<int, std::map<int, std::vector<size_t>>> by_phrase;
    for (size_t i = 0; i < data.speaker.size(); ++i)
      by_phrase[data.phrase[i]][data.speaker[i]].push_back(i);
    for (auto &[p, spk] : by_phrase) {
      std::vector<std::vector<size_t>> eligible;
      for (auto &kv : spk)
        if (kv.second.size() >= 2) eligible.push_back(std::move(kv.second));
      if (eligible.size() >= 2) pools_.push_back(std::move(eligible));
    }
    if (pools_.empty())
      throw DataError("PCT: no phrase has two speakers with two utterances");
  }

  std::vector<size_t> Batch(size_t step, std::vector<size_t> &phrase_order,
                            Rng &rng) const {
    if (step % pools_.size() == 0) {
      phrase_order.resize(pools_.size());
      std::iota(phrase_order.begin(), phrase_order.end(), 0);
      Shuffle(phrase_order, rng);
    }
    const auto &pool = pools_[phrase_order[step % pools_.size()]];
    std::vector<size_t> speakers(pool.size());
    std::iota(speakers.begin(), speakers.end(), 0);
    const size_t take =
        batch_speakers_ == 0
            ? pool.size()
            : std::min(pool.size(), static_cast<size_t>(batch_speakers_));
    std::vector<size_t> rows;
    for (size_t k = 0; k < take; ++k) {
      std::swap(speakers[k], speakers[k + rng.UniformInt(pool.size() - k)]);
      const auto &utts = pool[speakers[k]];
      const size_t a = rng.UniformInt(utts.size());
      size_t b = rng.UniformInt(utts.size() - 1);
      if (b >= a) ++b;
      rows.push_back(utts[a]);
      rows.push_back(utts[b]);
    }
    return rows;
  }

 private:
  int batch_speakers_;
  std::vector<std::vector<std::vector<size_t>>> pools_;
};

}  // namespace

TrainResult Train(const Extractor &init, const TrainingSet &data,
                  const TrainConfig &config) {
  config.Check();
  init.Check();
  if (data.features.cols() != init.InputDim())
    throw DataError("train: feature dimension does not match the extractor");
  if (NeedsPhrases(config.strategy))
    for (int p : data.phrase)
      if (p < 0)
        throw DataError("train: strategy " +
                        std::string(StrategyName(config.strategy)) +
                        " needs phrase labels on every utterance");

  TrainResult r;
  r.net = init;
  r.heads = InitHeads(data, config, static_cast<int>(init.EmbedDim()));
  if (config.epochs == 0) return r;

  Rng rng(config.seed);
  const size_t n = data.speaker.size();
  const size_t batch =
      config.batch_speakers == 0
          ? n
          : std::min(n, static_cast<size_t>(2 * config.batch_speakers));
  const size_t steps = (n + batch - 1) / batch;
  std::optional<PctSampler> pct;
  if (config.strategy == Strategy::kPct)
    pct.emplace(data, config.batch_speakers);
  std::vector<size_t> phrase_order;
  std::vector<size_t> perm(n);
  std::iota(perm.begin(), perm.end(), 0);

  for (int epoch = 0; epoch < config.epochs; ++epoch) {
    const double lr = config.LearningRate(epoch);
    if (!pct) Shuffle(perm, rng);
    double loss_sum = 0.0;
    for (size_t step = 0; step < steps; ++step) {
      std::vector<size_t> rows;
      if (pct) {
        rows = pct->Batch(epoch * steps + step, phrase_order, rng);
      } else {
        const size_t lo = step * batch, hi = std::min(n, lo + batch);
        rows.assign(perm.begin() + lo, perm.begin() + hi);
      }
      const BatchGradients g =
          StrategyGradients(r.net, r.heads, data, rows, config);
      loss_sum += g.loss;
      r.net.w1 -= lr * g.net.w1;
      r.net.b1 -= lr * g.net.b1;
      r.net.w2 -= lr * g.net.w2;
      r.net.b2 -= lr * g.net.b2;
      for (size_t h = 0; h < r.heads.heads.size(); ++h) {
        r.heads.heads[h].weights -= lr * g.heads[h];
        r.heads.heads[h].Renormalize();
      }
      if (config.strategy == Strategy::kPct) {
        r.heads.ge2e.w = std::max(r.heads.ge2e.w - lr * g.ge2e_w, 1e-6);
        r.heads.ge2e.b -= lr * g.ge2e_b;
      }
    }
    r.loss.push_back(loss_sum / static_cast<double>(steps));
  }
  r.net.Check();
  return r;
}

std::vector<Embedding> ExtractEmbeddings(const Extractor &net,
                                         std::span<const Embedding> features) {
  std::vector<Embedding> out;
  out.reserve(features.size());
  for (const auto &f : features) {
    ForwardResult r = Forward(net, f.vec);
    if (!r.unit)
      throw NumericError("extractor: zero raw embedding for " + f.utt_id);
    out.push_back({f.utt_id, std::move(*r.unit)});
  }
  return out;
}

}  // namespace spkv
