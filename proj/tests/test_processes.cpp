#include <gtest/gtest.h>

#include <cmath>

#include "nullrec/montecarlo.hpp"
#include "nullrec/processes.hpp"

using namespace nullrec;

namespace {

ProcessSpec make_spec(Family family) {
  ProcessSpec spec;
  spec.family = family;
  return spec;
}

double correlation(const std::vector<double>& a, const std::vector<double>& b) {
  const auto ma = sample_moments(a);
  const auto mb = sample_moments(b);
  double cov = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) cov += (a[i] - ma.mean) * (b[i] - mb.mean);
  cov /= static_cast<double>(a.size() - 1);
  return cov / (ma.sd * mb.sd);
}

std::vector<double> increments(const std::vector<double>& x) {
  std::vector<double> e;
  for (std::size_t t = 1; t < x.size(); ++t) e.push_back(x[t] - x[t - 1]);
  return e;
}

}  // namespace

TEST(Generate, IndependentNoiseIsStandardNormal) {
  const auto data = generate(make_spec(Family::kIndep), 10'000, 1);
  std::vector<double> resid(data.z.size());
  for (std::size_t t = 0; t < resid.size(); ++t) resid[t] = data.z[t] - data.x[t];
  EXPECT_LT(ks_normal(resid), 1.628 / std::sqrt(static_cast<double>(resid.size())));
}

TEST(Generate, SharedInnovationCorrelation) {
  const auto data = generate(make_spec(Family::kSharedInnovation), 100'000, 2);
  const auto e = increments(data.x);
  const std::vector<double> w(data.w.begin() + 1, data.w.end());
  EXPECT_NEAR(correlation(e, w), std::sqrt(0.5), 0.02);
}

TEST(Generate, MovingAverageWiring) {
  const auto data = generate(make_spec(Family::kMaLinked), 200'000, 3);
  const auto e = increments(data.x);  // e[t - 1] = e_t
  std::vector<double> w_now, e_now, e_lag;
  for (std::size_t t = 2; t < data.x.size(); ++t) {
    w_now.push_back(data.w[t]);
    e_now.push_back(e[t - 1]);
    e_lag.push_back(e[t - 2]);
  }
  const double r = 1.0 / std::sqrt(3.0);
  EXPECT_NEAR(correlation(w_now, e_now), r, 0.01);
  EXPECT_NEAR(correlation(w_now, e_lag), r, 0.01);
  EXPECT_NEAR(sample_moments(data.w).sd, 1.0, 0.01);
}

TEST(Generate, DegenerateRegressorNoise) {
  auto spec = make_spec(Family::kIndep);
  spec.params.sigma_e = 0.0;
  spec.f = TransferFunction::linear(2.0, 3.0);
  const auto data = generate(spec, 100, 4);
  for (std::size_t t = 0; t < data.x.size(); ++t) {
    EXPECT_EQ(data.x[t], 0.0);
    EXPECT_EQ(data.z[t], 3.0 + data.w[t]);
  }
}

TEST(Generate, ResidualReproducesNoise) {
  for (auto family : {Family::kIndep, Family::kSharedInnovation, Family::kAr1Linked,
                      Family::kMaLinked}) {
    auto spec = make_spec(family);
    spec.f = TransferFunction::linear(1.0, -5.0);
    const auto data = generate(spec, 1000, 5);
    for (std::size_t t = 0; t < data.x.size(); ++t) {
      const double fx = spec.f(data.x[t]);
      EXPECT_NEAR(data.z[t] - fx, data.w[t], 1e-15 * (std::abs(fx) + std::abs(data.w[t])));
    }
  }
}

TEST(Generate, DeterministicPerSeed) {
  for (auto family : {Family::kIndep, Family::kSharedInnovation, Family::kAr1Linked,
                      Family::kMaLinked}) {
    const auto spec = make_spec(family);
    const auto a = generate(spec, 500, 6);
    const auto b = generate(spec, 500, 6);
    const auto c = generate(spec, 500, 7);
    EXPECT_EQ(a.x, b.x);
    EXPECT_EQ(a.w, b.w);
    EXPECT_NE(a.x, c.x);
  }
}

TEST(Generate, UnitNoiseVariance) {
  for (auto family : {Family::kIndep, Family::kSharedInnovation}) {
    const auto data = generate(make_spec(family), 100'000, 8);
    const auto m = sample_moments(data.w);
    double m4 = 0.0;
    for (double w : data.w) m4 += std::pow(w - m.mean, 4);
    m4 /= static_cast<double>(data.w.size());
    const double var = m.sd * m.sd;
    const double se = std::sqrt((m4 - var * var) / static_cast<double>(data.w.size()));
    EXPECT_NEAR(var, 1.0, 4.0 * se);
  }
}

TEST(Generate, FiniteProductUsesChains) {
  Matrix p(2, 2);
  p << 0.9, 0.1, 0.2, 0.8;
  Vector s(2), nu(2);
  s << 0.2, 0.2;
  nu << 0.5, 0.5;
  auto spec = make_spec(Family::kFiniteProduct);
  spec.x_chain = FiniteMarkovModel(p, s, nu);
  spec.w_chain = FiniteMarkovModel(p, s, nu);
  const auto data = generate(spec, 50'000, 9);
  double stay = 0.0;
  double from0 = 0.0;
  for (std::size_t t = 1; t < data.x.size(); ++t) {
    if (data.x[t - 1] == 0.0) {
      from0 += 1.0;
      stay += data.x[t] == 0.0 ? 1.0 : 0.0;
    }
    EXPECT_TRUE(data.w[t] == 0.0 || data.w[t] == 1.0);
  }
  EXPECT_NEAR(stay / from0, 0.9, 0.01);
  auto incomplete = make_spec(Family::kFiniteProduct);
  EXPECT_THROW(generate(incomplete, 10, 1), Error);
}

TEST(TransferFunction, LinearAndTable) {
  const auto lin = TransferFunction::linear(2.0, -1.0);
  EXPECT_EQ(lin(3.0), 5.0);
  const auto table = TransferFunction::table({0.0, 1.0, 3.0}, {0.0, 2.0, 0.0});
  EXPECT_EQ(table(-1.0), 0.0);
  EXPECT_EQ(table(0.5), 1.0);
  EXPECT_EQ(table(2.0), 1.0);
  EXPECT_EQ(table(9.0), 0.0);
  EXPECT_THROW(TransferFunction::table({1.0, 0.0}, {0.0, 0.0}), Error);
}

TEST(SpecJson, RoundTripAndErrors) {
  const auto doc = nlohmann::json::parse(
      R"({"family":"AR1_LINKED","f":{"kind":"LINEAR","a":1,"b":"-5"},
          "params":{"a":0.3,"b":2,"sigma_e":1.5},"x0":0.25})");
  const auto spec = spec_from_json(doc);
  EXPECT_EQ(spec.family, Family::kAr1Linked);
  EXPECT_EQ(spec.f.intercept, -5.0);
  EXPECT_EQ(spec.params.a, 0.3);
  EXPECT_EQ(spec.x0, 0.25);
  const auto again = spec_from_json(spec_to_json(spec));
  EXPECT_EQ(generate(spec, 50, 1).z, generate(again, 50, 1).z);

  try {
    spec_from_json(nlohmann::json::parse(R"({"family":"GARCH"})"));
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::kUnknownProcessFamily);
  }
  try {
    spec_from_json(nlohmann::json::parse(R"({"family":"AR1_LINKED","params":{"a":1.0}})"));
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::kInvalidSpec);
  }
}

TEST(CrossMoment, ClosedForm) {
  auto spec = make_spec(Family::kAr1Linked);
  spec.params.a = 0.5;
  spec.params.b = 1.0;
  EXPECT_NEAR(theoretical_cross_moment(spec, 10'000), 2.0, 1e-12);
  EXPECT_NEAR(theoretical_cross_moment(spec, 0), 1.0, 1e-15);
  EXPECT_NEAR(theoretical_cross_moment(spec, 1), 1.5, 1e-15);
  spec.params.b = 0.0;
  for (std::size_t t : {0, 5, 100}) EXPECT_EQ(theoretical_cross_moment(spec, t), 0.0);
  try {
    theoretical_cross_moment(make_spec(Family::kIndep), 3);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::kWrongFamily);
  }
}

TEST(CrossMoment, MonteCarloAtSmallTimes) {
  // Early times are where the start convention matters.
  const auto spec = make_spec(Family::kAr1Linked);
  const auto points = empirical_corr_decay(spec, {0, 1, 2, 5}, 100'000, 10);
  for (const auto& p : points) {
    EXPECT_NEAR(p.cross_mean, theoretical_cross_moment(spec, p.t), 4.0 * p.cross_se) << "t=" << p.t;
  }
}

TEST(CorrDecay, ZeroLinkHasNoCorrelation) {
  auto spec = make_spec(Family::kAr1Linked);
  spec.params.b = 0.0;
  const auto points = empirical_corr_decay(spec, {10, 50, 100}, 20'000, 11);
  for (const auto& p : points) EXPECT_NEAR(p.corr, 0.0, 4.0 * p.corr_se);
  EXPECT_THROW(empirical_corr_decay(make_spec(Family::kIndep), {1}, 10, 1), Error);
}

TEST(CorrDecay, DecreasesLikeInverseSquareRoot) {
  const auto spec = make_spec(Family::kAr1Linked);
  const auto points = empirical_corr_decay(spec, {25, 50, 100, 200, 400}, 40'000, 12);
  for (std::size_t i = 1; i < points.size(); ++i) {
    EXPECT_LT(points[i].corr, points[i - 1].corr + points[i].corr_se);
  }
  const double ratio = points[2].corr / points[4].corr;
  EXPECT_GE(ratio, 1.6);
  EXPECT_LE(ratio, 2.5);
}
