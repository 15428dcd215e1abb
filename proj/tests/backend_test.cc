// tests/backend_test.cc

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

#include <algorithm>
#include <cmath>

#include "oracles.h"
#include "spkv/backend.h"
#include "spkv/error.h"
#include "spkv/rng.h"

using namespace spkv;

namespace {

Vector Draw(Rng &rng, const Vector &mean, const Matrix &chol) {
  Vector z(mean.size());
  for (Eigen::Index i = 0; i < z.size(); ++i) z(i) = rng.Normal();
  return mean + chol * z;
}

struct Simulated {
  std::vector<Vector> x;
  std::vector<std::string> spk;
};

Simulated Simulate(Rng &rng, const Vector &mean, const Matrix &between,
                   const Matrix &within, int n_spk, int n_utt) {
  const Matrix lb = between.llt().matrixL();
  const Matrix lw = within.llt().matrixL();
  const Vector zero = Vector::Zero(mean.size());
  Simulated s;
  for (int k = 0; k < n_spk; ++k) {
    const Vector y = Draw(rng, mean, lb);
    for (int u = 0; u < n_utt; ++u) {
      s.x.push_back(y + Draw(rng, zero, lw));
      s.spk.push_back("s" + std::to_string(k));
    }
  }
  return s;
}

Matrix RandomSpd(Rng &rng, int d, double floor) {
  Matrix a(d, d);
  for (int i = 0; i < d; ++i)
    for (int j = 0; j < d; ++j) a(i, j) = rng.Normal();
  return a * a.transpose() + floor * Matrix::Identity(d, d);
}

double RelFrob(const Matrix &est, const Matrix &ref) {
  return (est - ref).norm() / ref.norm();
}

// Fraction of (target, nontarget) pairs ordered correctly; ties count half.
double Auc(const std::vector<double> &tar, const std::vector<double> &non) {
  double acc = 0;
  for (double t : tar)
    for (double n : non) acc += t > n ? 1.0 : (t == n ? 0.5 : 0.0);
  return acc / (static_cast<double>(tar.size()) * non.size());
}

}  // namespace

TEST_CASE("cosine examples and properties") {
  Vector u(3);
  u << 0.3, -1.0, 2.0;
  CHECK(CosineScore(u, u) == doctest::Approx(1.0).epsilon(1e-15));
  CHECK(CosineScore(Vector::Unit(2, 0), Vector::Unit(2, 1)) == 0.0);
  Vector a(2), b(2);
  a << 1, 1;
  b << 1, 0;
  CHECK(std::abs(CosineScore(a, b) - 1 / std::sqrt(2.0)) < 1e-15);
  CHECK_THROWS_AS(CosineScore(Vector::Zero(2), b), NumericError);
  Rng rng(1);
  for (int i = 0; i < 50; ++i) {
    const Vector e = Draw(rng, Vector::Zero(4), Matrix::Identity(4, 4));
    const Vector t = Draw(rng, Vector::Zero(4), Matrix::Identity(4, 4));
    CHECK(CosineScore(e, t) == CosineScore(t, e));
    CHECK(std::abs(CosineScore(3.5 * e, 0.2 * t) - CosineScore(e, t)) < 1e-14);
  }
}

TEST_CASE("PLDA EM recovers simulated covariances") {
  Rng rng(2024);
  Vector mean(2);
  mean << 1.0, -2.0;
  Matrix between(2, 2), within(2, 2);
  between << 2.0, 0.6, 0.6, 1.0;
  within << 0.5, -0.1, -0.1, 0.3;
  const Simulated s = Simulate(rng, mean, between, within, 500, 10);
  PldaEmOptions opts;
  opts.iters = 20;
  const PldaTrainResult r = PldaEmTrain(s.x, s.spk, opts);
  CHECK(RelFrob(r.model.between, between) < 0.15);
  CHECK(RelFrob(r.model.within, within) < 0.15);
  REQUIRE(r.loglike.size() == 21u);
  for (size_t i = 1; i < r.loglike.size(); ++i)
    CHECK(r.loglike[i] >= r.loglike[i - 1] - 1e-8);
}

TEST_CASE("PLDA EM trace is monotone across seeds and dimensions") {
  for (uint64_t seed = 1; seed <= 8; ++seed) {
    Rng rng(seed);
    const int d = 2 + static_cast<int>(seed % 4);
    const Matrix b = RandomSpd(rng, d, 0.1) * 0.5;
    const Matrix w = RandomSpd(rng, d, 0.2) * 0.3;
    const Simulated s = Simulate(rng, Vector::Zero(d), b, w, 30, 2 + static_cast<int>(seed % 4));
    const PldaTrainResult r = PldaEmTrain(s.x, s.spk);
    for (size_t i = 1; i < r.loglike.size(); ++i)
      CHECK(r.loglike[i] >= r.loglike[i - 1] - 1e-8);
    // The reported trace value is the marginal log-likelihood.
    CHECK(std::abs(r.loglike.back() -
                   PldaLogLikelihood(r.model, s.x, s.spk)) < 1e-8);
  }
}

TEST_CASE("PLDA EM with zero iterations returns the initialization") {
  Rng rng(4);
  const Simulated s = Simulate(rng, Vector::Zero(2), Matrix::Identity(2, 2),
                               0.2 * Matrix::Identity(2, 2), 20, 3);
  PldaEmOptions zero;
  zero.iters = 0;
  const PldaTrainResult r0 = PldaEmTrain(s.x, s.spk, zero);
  CHECK(r0.loglike.size() == 1u);
  PldaEmOptions one;
  one.iters = 1;
  const PldaTrainResult r1 = PldaEmTrain(s.x, s.spk, one);
  CHECK(r1.loglike[0] == r0.loglike[0]);
  CHECK((r1.model.between - r0.model.between).norm() > 0.0);
}

TEST_CASE("PLDA EM rejects degenerate data") {
  std::vector<Vector> same(6, Vector::Ones(2));
  std::vector<std::string> spk = {"a", "a", "a", "b", "b", "b"};
  CHECK_THROWS_AS(PldaEmTrain(same, spk), NumericError);
  std::vector<Vector> x = {Vector::Unit(2, 0), Vector::Unit(2, 1)};
  std::vector<std::string> one_each = {"a", "b"};
  CHECK_THROWS_AS(PldaEmTrain(x, one_each), DataError);
  std::vector<std::string> one_spk = {"a", "a"};
  CHECK_THROWS_AS(PldaEmTrain(x, one_spk), DataError);
}

TEST_CASE("PLDA LLR special cases") {
  PldaModel m{Vector::Zero(2), Matrix::Zero(2, 2), Matrix::Identity(2, 2)};
  Rng rng(8);
  for (int i = 0; i < 20; ++i) {
    const Vector e = Draw(rng, Vector::Zero(2), Matrix::Identity(2, 2));
    const Vector t = Draw(rng, Vector::Zero(2), Matrix::Identity(2, 2));
    CHECK(std::abs(PldaLlrScore(m, e, t)) < 1e-12);
  }
  for (int i = 0; i < 20; ++i) {
    PldaModel r{Draw(rng, Vector::Zero(3), Matrix::Identity(3, 3)),
                RandomSpd(rng, 3, 0.1), RandomSpd(rng, 3, 0.1)};
    const Vector far = r.mean + 5.0 * Draw(rng, Vector::Zero(3),
                                           Matrix::Identity(3, 3));
    CHECK(PldaLlrScore(r, r.mean, r.mean) >= PldaLlrScore(r, r.mean, far));
    const Vector e = Draw(rng, r.mean, Matrix::Identity(3, 3));
    CHECK(PldaLlrScore(r, e, far) == doctest::Approx(PldaLlrScore(r, far, e)).epsilon(1e-12));
  }
  CHECK_THROWS_AS(PldaLlrScore(m, Vector::Zero(3), Vector::Zero(2)), DataError);
}

TEST_CASE("PLDA LLR matches quadrature over the latent variable") {
  Rng rng(77);
  for (int i = 0; i < 10; ++i) {
    PldaModel m{Draw(rng, Vector::Zero(2), Matrix::Identity(2, 2)),
                RandomSpd(rng, 2, 0.5), RandomSpd(rng, 2, 0.5)};
    for (int j = 0; j < 3; ++j) {
      const Vector e = Draw(rng, m.mean, 1.5 * Matrix::Identity(2, 2));
      const Vector t = Draw(rng, m.mean, 1.5 * Matrix::Identity(2, 2));
      const double q = oracle::QuadraturePldaLlr(
          m.mean, m.between, m.within, e, t);
      CHECK(std::abs(PldaLlrScore(m, e, t) - q) < 1e-6);
    }
  }
}

TEST_CASE("PLDA ranks same-speaker pairs better than cosine on raw factors") {
  Rng rng(31);
  const int d = 4;
  Vector mean(d);
  mean << 3.0, 0.0, 0.0, 0.0;
  Matrix between = Matrix::Zero(d, d), within = Matrix::Zero(d, d);
  between.diagonal() << 0.2, 4.0, 4.0, 0.01;
  within.diagonal() << 2.0, 0.1, 0.1, 2.0;
  const Simulated train = Simulate(rng, mean, between, within, 200, 5);
  const PldaModel model = PldaEmTrain(train.x, train.spk).model;
  const Simulated test = Simulate(rng, mean, between, within, 40, 2);
  std::vector<double> pt, pn, ct, cn;
  for (size_t i = 0; i < test.x.size(); ++i)
    for (size_t j = i + 1; j < test.x.size(); ++j) {
      const bool same = test.spk[i] == test.spk[j];
      (same ? pt : pn).push_back(PldaLlrScore(model, test.x[i], test.x[j]));
      (same ? ct : cn).push_back(CosineScore(test.x[i], test.x[j]));
    }
  CHECK(Auc(pt, pn) > Auc(ct, cn));
}

TEST_CASE("phrase PLDA bank") {
  Rng rng(12);
  const Matrix b = Matrix::Identity(2, 2), w = 0.3 * Matrix::Identity(2, 2);
  const Simulated p1 = Simulate(rng, Vector::Zero(2), b, w, 10, 4);
  const Simulated p2 = Simulate(rng, Vector::Ones(2), b, w, 8, 3);

  SUBCASE("single phrase equals plain training") {
    std::vector<std::string> ph(p1.x.size(), "p1");
    const PhrasePldaBank bank = TrainPhrasePldaBank(p1.x, p1.spk, ph);
    REQUIRE(bank.models.size() == 1u);
    const PldaModel direct = PldaEmTrain(p1.x, p1.spk).model;
    CHECK(bank.models.at("p1").between == direct.between);
    CHECK(bank.models.at("p1").within == direct.within);
    CHECK(bank.models.at("p1").mean == direct.mean);
  }
  SUBCASE("disjoint subsets train independently") {
    std::vector<Vector> x = p1.x;
    std::vector<std::string> spk = p1.spk, ph(p1.x.size(), "p1");
    for (size_t i = 0; i < p2.x.size(); ++i) {
      x.push_back(p2.x[i]);
      spk.push_back(p2.spk[i]);
      ph.push_back("p2");
    }
    const PhrasePldaBank bank = TrainPhrasePldaBank(x, spk, ph);
    CHECK(bank.failures.empty());
    CHECK(bank.models.at("p1").between == PldaEmTrain(p1.x, p1.spk).model.between);
    CHECK(bank.models.at("p2").within == PldaEmTrain(p2.x, p2.spk).model.within);
  }
  SUBCASE("phrase with one speaker is reported") {
    std::vector<Vector> x = p1.x;
    std::vector<std::string> spk = p1.spk, ph(p1.x.size(), "p1");
    for (int i = 0; i < 3; ++i) {
      x.push_back(p2.x[i]);
      spk.push_back("lonely");
      ph.push_back("p2");
    }
    const PhrasePldaBank bank = TrainPhrasePldaBank(x, spk, ph);
    CHECK(bank.models.count("p1") == 1u);
    CHECK(bank.failures.count("p2") == 1u);
  }
}
