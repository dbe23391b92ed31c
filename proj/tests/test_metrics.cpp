#include <cmath>

#include <gtest/gtest.h>

#include "dyad/errors.hpp"
#include "dyad/metrics.hpp"
#include "dyad/rng.hpp"

namespace dyad::metrics {
namespace {

SequenceSet random_set(std::size_t n, Eigen::Index t, Eigen::Index f, std::uint64_t seed, double scale = 1.0,
                       double shift = 0.0) {
  Rng rng(seed);
  SequenceSet out;
  for (std::size_t i = 0; i < n; ++i) {
    Eigen::MatrixXd m(t, f);
    for (Eigen::Index r = 0; r < t; ++r) {
      for (Eigen::Index c = 0; c < f; ++c) m(r, c) = shift + scale * rng.normal();
    }
    out.push_back(m);
  }
  return out;
}

TEST(L2, KnownOffset) {
  // Every frame differs by (3, 4): distance 5.
  SequenceSet a{Eigen::MatrixXd::Zero(4, 2)}, b{Eigen::MatrixXd::Zero(4, 2)};
  b[0].col(0).setConstant(3.0);
  b[0].col(1).setConstant(4.0);
  EXPECT_DOUBLE_EQ(l2(a, b), 5.0);
  EXPECT_DOUBLE_EQ(l2(a, a), 0.0);
}

TEST(L2, ShapeMismatchThrows) {
  SequenceSet a{Eigen::MatrixXd::Zero(4, 2)}, b{Eigen::MatrixXd::Zero(3, 2)};
  EXPECT_THROW(l2(a, b), ShapeError);
}

TEST(Frechet, IdenticalSetsGiveZero) {
  const auto a = random_set(40, 2, 3, 1);
  EXPECT_NEAR(frechet_distance(a, a), 0.0, 1e-9);
}

TEST(Frechet, IdentityCovariancesShiftedMeans) {
  // N(mu, I) vs N(0, I): d^2 = |mu|^2.
  Gaussian a{Eigen::VectorXd::Constant(4, 1.0), Eigen::MatrixXd::Identity(4, 4)};
  Gaussian b{Eigen::VectorXd::Zero(4), Eigen::MatrixXd::Identity(4, 4)};
  EXPECT_NEAR(frechet_distance(a, b), 4.0, 1e-12);
}

TEST(Frechet, DiagonalCovariances) {
  // Diagonal: sum (sqrt(a_i) - sqrt(b_i))^2 = (1-2)^2 + (3-1)^2.
  Gaussian a{Eigen::VectorXd::Zero(2), Eigen::Vector2d(1.0, 9.0).asDiagonal()};
  Gaussian b{Eigen::VectorXd::Zero(2), Eigen::Vector2d(4.0, 1.0).asDiagonal()};
  EXPECT_NEAR(frechet_distance(a, b), 5.0, 1e-12);
}

TEST(Frechet, SymmetricAndNonNegative) {
  const auto a = random_set(30, 2, 2, 2), b = random_set(30, 2, 2, 3, 2.0, 0.5);
  const double ab = frechet_distance(a, b), ba = frechet_distance(b, a);
  EXPECT_GE(ab, 0.0);
  EXPECT_NEAR(ab, ba, 1e-9 * std::max(1.0, ab));
}

TEST(Frechet, GramRouteMatchesEigenRoute) {
  // 20 + 25 samples in R^60: both routes on the same data.
  const auto a = random_set(20, 6, 10, 4), b = random_set(25, 6, 10, 5, 1.5, 0.3);
  const double gram = frechet_distance_gram(a, b);
  const double eig = frechet_distance(fit_gaussian(a), fit_gaussian(b));
  EXPECT_NEAR(gram, eig, 1e-6 * eig);
  EXPECT_DOUBLE_EQ(frechet_distance(a, b), gram);
}

TEST(Frechet, NonFiniteThrows) {
  auto a = random_set(5, 1, 2, 6);
  a[0](0, 0) = std::nan("");
  EXPECT_THROW(fit_gaussian(a), NumericalError);
}

TEST(PairedFd, SpeakerBlockCancelsForIdenticalListeners) {
  const auto l = random_set(30, 2, 2, 7), s = random_set(30, 2, 1, 8);
  EXPECT_NEAR(paired_fd(l, l, s), 0.0, 1e-9);
  const auto l2set = random_set(30, 2, 2, 9, 1.0, 1.0);
  EXPECT_GT(paired_fd(l2set, l, s), 1.0);
}

TEST(Variation, ConstantSequenceIsZero) {
  SequenceSet s{Eigen::MatrixXd::Constant(10, 3, 2.5)};
  EXPECT_DOUBLE_EQ(variation(s), 0.0);
}

TEST(Variation, KnownValue) {
  // Values 0, 2 along time: population variance 1 in every feature.
  Eigen::MatrixXd m(2, 3);
  m << 0, 0, 0, 2, 2, 2;
  EXPECT_DOUBLE_EQ(variation({m}), 1.0);
  EXPECT_DOUBLE_EQ(variation({Eigen::MatrixXd::Ones(1, 3)}), 0.0);
}

TEST(Variation, ShiftInvariantScaleQuadratic) {
  const auto a = random_set(5, 20, 3, 10);
  auto b = a;
  for (auto& m : b) m = (m.array() * 3.0 + 7.0).matrix();
  EXPECT_NEAR(variation(b), 9.0 * variation(a), 1e-9);
}

TEST(Shannon, SingleClusterIsZeroUniformIsLogK) {
  Eigen::MatrixXd x(4, 1);
  x << 0, 10, 20, 30;
  const auto model = fit_clusters(x, 4, 0);
  EXPECT_NEAR(shannon_index(model, {x}), std::log(4.0), 1e-12);
  Eigen::MatrixXd same = Eigen::MatrixXd::Constant(5, 1, 10.0);
  EXPECT_DOUBLE_EQ(shannon_index(model, {same}), 0.0);
}

TEST(Shannon, BoundedByLogK) {
  const auto train = random_set(10, 20, 2, 11);
  const auto model = fit_clusters(train, 8, 0);
  const double h = shannon_index(model, random_set(3, 20, 2, 12));
  EXPECT_GE(h, 0.0);
  EXPECT_LE(h, std::log(8.0) + 1e-12);
}

TEST(KMeans, DeterministicForSeed) {
  const auto train = random_set(5, 30, 2, 13);
  const auto a = fit_clusters(train, 5, 42), b = fit_clusters(train, 5, 42);
  EXPECT_EQ(a.centroids, b.centroids);
}

TEST(KMeans, KTooLargeThrows) {
  EXPECT_THROW(fit_clusters(Eigen::MatrixXd::Zero(3, 2), 4), ContractError);
  EXPECT_THROW(fit_clusters(Eigen::MatrixXd::Zero(0, 2), 1), EmptyInput);
}

TEST(Pcc, KnownValues) {
  std::vector<double> x{1, 2, 3, 4}, y{2, 4, 6, 8}, z{4, 3, 2, 1};
  EXPECT_NEAR(pcc(x, y), 1.0, 1e-15);
  EXPECT_NEAR(pcc(x, z), -1.0, 1e-15);
  std::vector<double> c{1, 1, 1, 1};
  EXPECT_THROW(pcc(x, c), DegenerateInput);
}

TEST(Pcc, InvariantToAffineMaps) {
  Rng rng(14);
  std::vector<double> x(50), y(50), y2(50);
  for (std::size_t i = 0; i < 50; ++i) {
    x[i] = rng.normal();
    y[i] = x[i] + rng.normal();
    y2[i] = 3.0 * y[i] - 5.0;
  }
  EXPECT_NEAR(pcc(x, y), pcc(x, y2), 1e-12);
  EXPECT_NEAR(pcc(x, y), pcc(y, x), 1e-15);
}

TEST(Tlcc, RecoversShift) {
  Rng rng(15);
  const std::size_t n = 300, shift = 23;
  std::vector<double> base(n + shift);
  for (double& v : base) v = rng.normal();
  // speaker[t] = base[t], listener[t] = base[t - shift] for t >= shift.
  std::vector<double> speaker(n), listener(n);
  for (std::size_t t = 0; t < n; ++t) {
    speaker[t] = base[t + shift];
    listener[t] = t >= shift ? base[t] : rng.normal();
  }
  EXPECT_EQ(tlcc(speaker, listener, 60).peak_lag, shift);
  EXPECT_EQ(tlcc(speaker, listener, 60).curve.size(), 61u);
}

TEST(Tlcc, TooShortThrows) {
  std::vector<double> a(30, 1.0);
  EXPECT_THROW(tlcc(a, a, 60), ContractError);
}

TEST(Project, SmileAndNod) {
  MotionSequence s(3);
  s.push_back({{1.0f, 2.0f, 3.0f}, {0.1f, 0.2f, 0.3f}});
  EXPECT_DOUBLE_EQ(project_1d(s, Channel::ExpressionSmile)[0], 1.0);
  EXPECT_NEAR(project_1d(s, Channel::RotationNod)[0], 0.1, 1e-7);
  Projection p{{0.5, 0.5}};
  EXPECT_DOUBLE_EQ(project_1d(s, Channel::ExpressionSmile, p)[0], 1.5);
}

TEST(Frechet, OneDimensionalClosedForms) {
  Gaussian a{Eigen::VectorXd::Zero(1), Eigen::MatrixXd::Identity(1, 1)};
  Gaussian b{Eigen::VectorXd::Ones(1), Eigen::MatrixXd::Identity(1, 1)};
  EXPECT_NEAR(frechet_distance(a, b), 1.0, 1e-9);
  Gaussian c{Eigen::VectorXd::Zero(1), Eigen::MatrixXd::Constant(1, 1, 4.0)};
  EXPECT_NEAR(frechet_distance(c, a), 1.0, 1e-9);
}

TEST(Frechet, TooFewSamplesThrows) {
  EXPECT_THROW(frechet_distance(random_set(1, 2, 2, 1), random_set(5, 2, 2, 2)), ContractError);
}

TEST(Tlcc, WhiteNoiseHasNoStructure) {
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    Rng rng(100 + seed);
    std::vector<double> a(2000), b(2000);
    for (double& v : a) v = rng.normal();
    for (double& v : b) v = rng.normal();
    for (double r : tlcc(a, b, 60).curve) EXPECT_LT(std::abs(r), 0.1);
  }
}

TEST(Tlcc, PeakInvariantToScaling) {
  Rng rng(16);
  std::vector<double> s(200), l(200);
  for (double& v : s) v = rng.normal();
  for (std::size_t t = 0; t < 200; ++t) l[t] = t >= 9 ? s[t - 9] : 0.0;
  const auto base = tlcc(s, l, 60).peak_lag;
  for (double& v : l) v *= 4.0;
  EXPECT_EQ(tlcc(s, l, 60).peak_lag, base);
  EXPECT_EQ(base, 9u);
}

TEST(PairedFd, ShufflingPairsIncreasesDistance) {
  // Listener equals speaker plus small noise; a shuffled pairing breaks it.
  Rng rng(17);
  SequenceSet sp, li, shuffled;
  for (int i = 0; i < 60; ++i) {
    Eigen::MatrixXd s(3, 1), l(3, 1);
    for (int t = 0; t < 3; ++t) {
      s(t, 0) = rng.normal();
      l(t, 0) = s(t, 0) + 0.1 * rng.normal();
    }
    sp.push_back(s);
    li.push_back(l);
  }
  for (int i = 0; i < 60; ++i) shuffled.push_back(li[(i + 7) % 60]);
  EXPECT_GT(paired_fd(shuffled, li, sp), paired_fd(li, li, sp) + 1.0);
}

TEST(Variation, MatchesPerColumnOracle) {
  const auto set = random_set(4, 15, 3, 18);
  double total = 0.0;
  for (const auto& m : set) {
    for (Eigen::Index c = 0; c < m.cols(); ++c) {
      double mu = 0.0, var = 0.0;
      for (Eigen::Index t = 0; t < m.rows(); ++t) mu += m(t, c);
      mu /= static_cast<double>(m.rows());
      for (Eigen::Index t = 0; t < m.rows(); ++t) var += (m(t, c) - mu) * (m(t, c) - mu);
      total += var / static_cast<double>(m.rows());
    }
  }
  EXPECT_NEAR(variation(set), total / 12.0, 1e-12);
}

}  // namespace
}  // namespace dyad::metrics
