// src/nplda.cc

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

#include "spkv/nplda.h"

#include <algorithm>
#include <cmath>
#include <memory>
#include <numeric>

#include "spkv/error.h"

namespace spkv {

NpldaParams InitFromPlda(const PldaModel &model) {
  model.Check();
  const Eigen::Index d = model.Dim();
  const Matrix total = model.between + model.within;
  Matrix joint(2 * d, 2 * d);
  joint << total, model.between, model.between, total;
  Eigen::LLT<Matrix> joint_llt(joint), total_llt(total);
  if (joint_llt.info() != Eigen::Success || total_llt.info() != Eigen::Success)
    throw NumericError("NPLDA init: PLDA covariances are not invertible");
  const Matrix joint_inv = joint_llt.solve(Matrix::Identity(2 * d, 2 * d));
  const Matrix total_inv = total_llt.solve(Matrix::Identity(d, d));
  const Matrix a = 0.5 * (joint_inv.topLeftCorner(d, d) +
                          joint_inv.bottomRightCorner(d, d));
  const Matrix b = 0.5 * (joint_inv.topRightCorner(d, d) +
                          joint_inv.bottomLeftCorner(d, d).transpose());

  auto logdet = [](const Eigen::LLT<Matrix> &llt) {
    return 2.0 * llt.matrixLLT().diagonal().array().log().sum();
  };

  // Centered form: e~' G e~ + t~' G t~ + e~' L t~ + k0.
  NpldaParams p;
  p.cross = -0.5 * (b + b.transpose());
  p.self = 0.5 * (total_inv - a);
  p.self = 0.5 * (p.self + p.self.transpose()).eval();
  const double k0 = -0.5 * logdet(joint_llt) + logdet(total_llt);
  const Vector &mu = model.mean;
  p.linear = -(p.cross + 2.0 * p.self) * mu;
  p.offset = k0 + mu.dot(p.cross * mu) + 2.0 * mu.dot(p.self * mu);
  return p;
}

double NpldaScore(const NpldaParams &p, const Vector &e, const Vector &t) {
  const Eigen::Index d = p.Dim();
  if (e.size() != d || t.size() != d)
    throw DataError("NPLDA score: dimension mismatch");
  const double cross = 0.5 * (e.dot(p.cross * t) + t.dot(p.cross * e));
  const double self = e.dot(p.self * e) + t.dot(p.self * t);
  return cross + self + p.linear.dot(e + t) + p.offset;
}

namespace {

double Sigmoid(double x) {
  if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
  const double z = std::exp(x);
  return z / (1.0 + z);
}

}  // namespace

SoftDetCostResult SoftDetCost(std::span<const double> scores,
                              std::span<const bool> is_target,
                              double threshold, double alpha,
                              const DcfParams &cost) {
  cost.Check();
  if (scores.size() != is_target.size())
    throw DataError("soft cost: scores and labels differ in length");
  if (!(alpha > 0.0)) throw UsageError("soft cost: alpha must be positive");
  const size_t n_tar =
      static_cast<size_t>(std::count(is_target.begin(), is_target.end(), true));
  const size_t n_non = scores.size() - n_tar;
  if (n_tar == 0 || n_non == 0)
    throw DataError("soft cost: need both targets and nontargets");
  const double norm = cost.Normalizer();
  const double w_miss = cost.c_miss * cost.p_target / norm / n_tar;
  const double w_fa = cost.c_fa * (1.0 - cost.p_target) / norm / n_non;

  SoftDetCostResult r;
  r.grad_scores.resize(scores.size());
  for (size_t i = 0; i < scores.size(); ++i) {
    if (is_target[i]) {
      const double sg = Sigmoid(alpha * (threshold - scores[i]));
      const double ds = sg * (1.0 - sg) * alpha;
      r.loss += w_miss * sg;
      r.grad_scores[i] = -w_miss * ds;
      r.grad_threshold += w_miss * ds;
    } else {
      const double sg = Sigmoid(alpha * (scores[i] - threshold));
      const double ds = sg * (1.0 - sg) * alpha;
      r.loss += w_fa * sg;
      r.grad_scores[i] = w_fa * ds;
      r.grad_threshold -= w_fa * ds;
    }
  }
  return r;
}

double MinDcfThreshold(std::span<const double> scores,
                       std::span<const bool> is_target,
                       const DcfParams &cost) {
  cost.Check();
  if (scores.size() != is_target.size() || scores.empty())
    throw DataError("threshold search: bad input");
  std::vector<size_t> order(scores.size());
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(),
            [&](size_t a, size_t b) { return scores[a] < scores[b]; });
  const double n_tar = std::count(is_target.begin(), is_target.end(), true);
  const double n_non = scores.size() - n_tar;
  if (n_tar == 0 || n_non == 0)
    throw DataError("threshold search: need both classes");
  const double norm = cost.Normalizer();
  auto dcf = [&](double misses, double fas) {
    return (cost.c_miss * cost.p_target * misses / n_tar +
            cost.c_fa * (1.0 - cost.p_target) * fas / n_non) /
           norm;
  };
  // Walk thresholds between consecutive distinct scores.
  double misses = 0.0, fas = n_non;
  double best = dcf(misses, fas);
  double best_thr = scores[order.front()] - 1.0;
  for (size_t i = 0; i < order.size();) {
    const double v = scores[order[i]];
    while (i < order.size() && scores[order[i]] == v) {
      if (is_target[order[i]])
        misses += 1.0;
      else
        fas -= 1.0;
      ++i;
    }
    const double c = dcf(misses, fas);
    if (c < best) {
      best = c;
      best_thr = i < order.size() ? 0.5 * (v + scores[order[i]]) : v + 1.0;
    }
  }
  return best_thr;
}

NpldaTrainResult TrainNplda(const NpldaParams &init,
                            std::span<const NpldaPair> pairs,
                            const NpldaTrainConfig &config) {
  if (config.epochs < 0) throw UsageError("NPLDA: negative epoch count");
  if (!(config.learning_rate > 0.0))
    throw UsageError("NPLDA: learning rate must be positive");
  const Eigen::Index d = init.Dim();
  std::vector<bool> labels_vec;
  for (const auto &p : pairs) {
    if (p.enroll_phrase != p.test_phrase)
      throw DataError("NPLDA: cross-phrase training pair (" + p.enroll_phrase +
                      " vs " + p.test_phrase + ")");
    if (p.enroll.size() != d || p.test.size() != d)
      throw DataError("NPLDA: dimension mismatch in training pair");
    labels_vec.push_back(p.is_target);
  }
  // std::vector<bool> has no contiguous storage; copy for span access.
  std::unique_ptr<bool[]> labels(new bool[labels_vec.size()]);
  for (size_t i = 0; i < labels_vec.size(); ++i) labels[i] = labels_vec[i];
  const std::span<const bool> is_target(labels.get(), labels_vec.size());

  NpldaTrainResult r;
  r.params = init;
  std::vector<double> scores(pairs.size());
  auto score_all = [&] {
    for (size_t i = 0; i < pairs.size(); ++i)
      scores[i] = NpldaScore(r.params, pairs[i].enroll, pairs[i].test);
  };
  score_all();
  r.threshold = config.threshold
                    ? *config.threshold
                    : MinDcfThreshold(scores, is_target, config.cost);
  SoftDetCostResult cur =
      SoftDetCost(scores, is_target, r.threshold, config.alpha, config.cost);
  r.loss.push_back(cur.loss);

  const double lr = config.learning_rate;
  for (int epoch = 0; epoch < config.epochs; ++epoch) {
    Matrix g_cross = Matrix::Zero(d, d), g_self = Matrix::Zero(d, d);
    Vector g_lin = Vector::Zero(d);
    double g_off = 0.0;
    for (size_t i = 0; i < pairs.size(); ++i) {
      const double g = cur.grad_scores[i];
      if (g == 0.0) continue;
      const Vector &e = pairs[i].enroll, &t = pairs[i].test;
      g_cross.noalias() += 0.5 * g * (e * t.transpose() + t * e.transpose());
      g_self.noalias() += g * (e * e.transpose() + t * t.transpose());
      g_lin += g * (e + t);
      g_off += g;
    }
    r.params.cross -= lr * g_cross;
    r.params.self -= lr * g_self;
    r.params.linear -= lr * g_lin;
    r.params.offset -= lr * g_off;
    r.threshold -= lr * cur.grad_threshold;
    score_all();
    cur = SoftDetCost(scores, is_target, r.threshold, config.alpha,
                      config.cost);
    r.loss.push_back(cur.loss);
  }
  return r;
}

}  // namespace spkv
