// src/backend.cc

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

#include "spkv/backend.h"

#include <cmath>
#include <numbers>

#include "spkv/error.h"

namespace spkv {

double CosineScore(const Vector &e, const Vector &t) {
  if (e.size() != t.size()) throw DataError("cosine: dimension mismatch");
  const double ne = e.norm(), nt = t.norm();
  if (!(ne > 0.0) || !(nt > 0.0)) throw NumericError("cosine: zero vector");
  return e.dot(t) / (ne * nt);
}

void PldaModel::Check() const {
  const Eigen::Index d = mean.size();
  if (d == 0 || between.rows() != d || between.cols() != d ||
      within.rows() != d || within.cols() != d)
    throw DataError("PLDA: inconsistent dimensions");
  if (!mean.allFinite() || !between.allFinite() || !within.allFinite())
    throw NumericError("PLDA: non-finite parameters");
  const double scale = 1e-9 * (1.0 + between.norm() + within.norm());
  if ((between - between.transpose()).norm() > scale ||
      (within - within.transpose()).norm() > scale)
    throw NumericError("PLDA: covariances are not symmetric");
  Eigen::SelfAdjointEigenSolver<Matrix> eb(between, Eigen::EigenvaluesOnly);
  Eigen::SelfAdjointEigenSolver<Matrix> ew(within, Eigen::EigenvaluesOnly);
  if (eb.eigenvalues().minCoeff() < -scale)
    throw NumericError("PLDA: between-speaker covariance is not PSD");
  if (!(ew.eigenvalues().minCoeff() > 0.0))
    throw NumericError("PLDA: within-speaker covariance is not PD");
}

namespace {

constexpr double kLog2Pi = 1.8378770664093454836;

struct SpeakerStats {
  double n = 0.0;
  Vector sum;
  Matrix scatter;  // sum of x x^T
};

std::vector<SpeakerStats> Accumulate(std::span<const Vector> data,
                                     std::span<const std::string> labels) {
  if (data.size() != labels.size())
    throw DataError("PLDA: data and labels differ in length");
  if (data.empty()) throw DataError("PLDA: no data");
  const Eigen::Index d = data.front().size();
  std::map<std::string, SpeakerStats> by_spk;
  for (size_t i = 0; i < data.size(); ++i) {
    if (data[i].size() != d) throw DataError("PLDA: dimension mismatch");
    if (!data[i].allFinite()) throw DataError("PLDA: non-finite input");
    auto &s = by_spk[labels[i]];
    if (s.n == 0.0) {
      s.sum = Vector::Zero(d);
      s.scatter = Matrix::Zero(d, d);
    }
    s.n += 1.0;
    s.sum += data[i];
    s.scatter.noalias() += data[i] * data[i].transpose();
  }
  std::vector<SpeakerStats> out;
  out.reserve(by_spk.size());
  for (auto &kv : by_spk) out.push_back(std::move(kv.second));
  return out;
}

Eigen::LLT<Matrix> Cholesky(const Matrix &m, const char *what) {
  Eigen::LLT<Matrix> llt(m);
  if (llt.info() != Eigen::Success)
    throw NumericError(std::string("PLDA: ") + what +
                       " is not positive definite");
  return llt;
}

double LogDet(const Eigen::LLT<Matrix> &llt) {
  return 2.0 * llt.matrixLLT().diagonal().array().log().sum();
}

// log N(x; 0, C) given the Cholesky factor of C.
double LogGauss(const Vector &x, const Eigen::LLT<Matrix> &llt) {
  const Vector z = llt.matrixL().solve(x);
  return -0.5 * (x.size() * kLog2Pi + LogDet(llt) + z.squaredNorm());
}

struct Posterior {
  Vector mean;
  Matrix cov;
  Eigen::LLT<Matrix> prec_llt;
};

Posterior SpeakerPosterior(const PldaModel &m, const Matrix &between_inv,
                           const Matrix &within_inv,
                           const SpeakerStats &s) {
  Matrix prec = between_inv + s.n * within_inv;
  prec = 0.5 * (prec + prec.transpose());
  Posterior p{Vector(), Matrix(), Cholesky(prec, "posterior precision")};
  p.cov = p.prec_llt.solve(Matrix::Identity(prec.rows(), prec.cols()));
  p.mean = p.cov * (between_inv * m.mean + within_inv * s.sum);
  return p;
}

double LogLikelihood(const PldaModel &m, const std::vector<SpeakerStats> &st) {
  const auto b_llt = Cholesky(m.between, "between-speaker covariance");
  const auto w_llt = Cholesky(m.within, "within-speaker covariance");
  const Eigen::Index d = m.Dim();
  const Matrix b_inv = b_llt.solve(Matrix::Identity(d, d));
  const Matrix w_inv = w_llt.solve(Matrix::Identity(d, d));
  const double w_logdet = LogDet(w_llt);
  double total = 0.0;
  for (const auto &s : st) {
    const Posterior p = SpeakerPosterior(m, b_inv, w_inv, s);
    // p(X) = p(X | y) p(y) / p(y | X), evaluated at y = posterior mean.
    const Vector &y = p.mean;
    const Matrix resid = s.scatter - s.sum * y.transpose() -
                         y * s.sum.transpose() + s.n * y * y.transpose();
    const double lik = -0.5 * (s.n * (d * kLog2Pi + w_logdet) +
                               (w_inv.cwiseProduct(resid)).sum());
    const double prior = LogGauss(y - m.mean, b_llt);
    const double post = -0.5 * (d * kLog2Pi - LogDet(p.prec_llt));
    total += lik + prior - post;
  }
  return total;
}

Matrix Symmetrize(const Matrix &m) { return 0.5 * (m + m.transpose()); }

}  // namespace

double PldaLogLikelihood(const PldaModel &model, std::span<const Vector> data,
                         std::span<const std::string> speaker_labels) {
  return LogLikelihood(model, Accumulate(data, speaker_labels));
}

PldaTrainResult PldaEmTrain(std::span<const Vector> data,
                            std::span<const std::string> speaker_labels,
                            const PldaEmOptions &opts) {
  if (opts.iters < 0) throw UsageError("PLDA: negative iteration count");
  const std::vector<SpeakerStats> st = Accumulate(data, speaker_labels);
  if (st.size() < 2) throw DataError("PLDA: need at least two speakers");
  bool has_repeat = false;
  for (const auto &s : st) has_repeat |= s.n >= 2.0;
  if (!has_repeat)
    throw DataError("PLDA: need a speaker with at least two utterances");

  const Eigen::Index d = data.front().size();
  double n_total = 0.0;
  Vector sum = Vector::Zero(d);
  Matrix scatter = Matrix::Zero(d, d);
  for (const auto &s : st) {
    n_total += s.n;
    sum += s.sum;
    scatter += s.scatter;
  }
  const double n_spk = static_cast<double>(st.size());
  PldaModel m;
  m.mean = sum / n_total;
  const Matrix total_cov =
      scatter / n_total - m.mean * m.mean.transpose();
  const double trace = total_cov.trace();
  if (!(trace > 1e-300))
    throw NumericError("PLDA: degenerate data (zero total variance)");
  const double ridge_scale = opts.ridge < 0.0 ? 1e-6 : opts.ridge;
  const Matrix ridge = Matrix::Identity(d, d) * (ridge_scale * trace / d);

  // Initialization from between-mean and within-speaker scatter.
  Matrix within = Matrix::Zero(d, d), between = Matrix::Zero(d, d);
  double within_dof = 0.0;
  for (const auto &s : st) {
    const Vector mu_s = s.sum / s.n;
    within += s.scatter - s.n * mu_s * mu_s.transpose();
    within_dof += s.n - 1.0;
    between += (mu_s - m.mean) * (mu_s - m.mean).transpose();
  }
  m.within = Symmetrize(within / within_dof) + ridge;
  m.between = Symmetrize(between / n_spk) + ridge;

  PldaTrainResult result;
  result.loglike.push_back(LogLikelihood(m, st));
  for (int it = 0; it < opts.iters; ++it) {
    const Matrix b_inv = Cholesky(m.between, "between-speaker covariance")
                             .solve(Matrix::Identity(d, d));
    const Matrix w_inv = Cholesky(m.within, "within-speaker covariance")
                             .solve(Matrix::Identity(d, d));
    std::vector<Posterior> post;
    post.reserve(st.size());
    Vector mean_acc = Vector::Zero(d);
    for (const auto &s : st) {
      post.push_back(SpeakerPosterior(m, b_inv, w_inv, s));
      mean_acc += post.back().mean;
    }
    const Vector new_mean = mean_acc / n_spk;
    Matrix b_acc = Matrix::Zero(d, d), w_acc = Matrix::Zero(d, d);
    for (size_t k = 0; k < st.size(); ++k) {
      const auto &s = st[k];
      const Vector &y = post[k].mean;
      const Vector dy = y - new_mean;
      b_acc += post[k].cov + dy * dy.transpose();
      w_acc += s.scatter - s.sum * y.transpose() - y * s.sum.transpose() +
               s.n * (y * y.transpose() + post[k].cov);
    }
    m.mean = new_mean;
    m.between = Symmetrize(b_acc / n_spk) + ridge;
    m.within = Symmetrize(w_acc / n_total) + ridge;
    result.loglike.push_back(LogLikelihood(m, st));
  }
  result.model = std::move(m);
  return result;
}

double PldaLlrScore(const PldaModel &model, const Vector &e, const Vector &t) {
  const Eigen::Index d = model.Dim();
  if (e.size() != d || t.size() != d)
    throw DataError("PLDA score: dimension mismatch");
  const Matrix total = model.between + model.within;
  Matrix joint(2 * d, 2 * d);
  joint << total, model.between, model.between, total;
  Vector z(2 * d);
  z << e - model.mean, t - model.mean;
  const auto joint_llt = Cholesky(joint, "same-speaker joint covariance");
  const auto total_llt = Cholesky(total, "total covariance");
  return LogGauss(z, joint_llt) - LogGauss(z.head(d), total_llt) -
         LogGauss(z.tail(d), total_llt);
}

PhrasePldaBank TrainPhrasePldaBank(std::span<const Vector> data,
                                   std::span<const std::string> speaker_labels,
                                   std::span<const std::string> phrase_labels,
                                   const PldaEmOptions &opts) {
  if (data.size() != speaker_labels.size() ||
      data.size() != phrase_labels.size())
    throw DataError("PLDA bank: data and labels differ in length");
  std::map<std::string, std::vector<size_t>> by_phrase;
  for (size_t i = 0; i < data.size(); ++i)
    by_phrase[phrase_labels[i]].push_back(i);

  PhrasePldaBank bank;
  for (const auto &[phrase, idx] : by_phrase) {
    std::vector<Vector> x;
    std::vector<std::string> spk;
    std::map<std::string, int> counts;
    for (size_t i : idx) {
      x.push_back(data[i]);
      spk.push_back(speaker_labels[i]);
      ++counts[speaker_labels[i]];
    }
    int usable = 0;
    for (const auto &kv : counts) usable += kv.second >= 2;
    if (usable < 2) {
      bank.failures[phrase] =
          "needs two speakers with at least two utterances each";
      continue;
    }
    try {
      bank.models[phrase] = PldaEmTrain(x, spk, opts).model;
    } catch (const Error &err) {
      bank.failures[phrase] = err.what();
    }
  }
  return bank;
}

}  // namespace spkv
