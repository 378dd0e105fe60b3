#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <map>
#include <numeric>
#include <random>

#include "nullrec/estimator.hpp"
#include "nullrec/montecarlo.hpp"
#include "nullrec/processes.hpp"

using namespace nullrec;

namespace {

// Composite Simpson rule on [a, b] with n (even) panels.
template <class F>
double simpson(F f, double a, double b, int n = 20000) {
  const double h = (b - a) / n;
  double sum = f(a) + f(b);
  for (int i = 1; i < n; ++i) sum += f(a + i * h) * (i % 2 == 1 ? 4.0 : 2.0);
  return sum * h / 3.0;
}

struct Instance {
  std::vector<double> x;
  std::vector<double> z;
  double x_eval;
  double h;
};

Instance random_instance(std::mt19937_64& rng) {
  std::uniform_int_distribution<int> size(5, 60);
  std::uniform_real_distribution<double> u(-3.0, 3.0);
  Instance inst;
  const int n = size(rng);
  for (int i = 0; i < n; ++i) {
    inst.x.push_back(u(rng));
    inst.z.push_back(u(rng) * 4.0);
  }
  inst.x_eval = inst.x[0] + 0.1 * u(rng);
  inst.h = 0.5 + std::abs(u(rng));
  return inst;
}

ProcessSpec fig1_system() {
  ProcessSpec spec;
  spec.family = Family::kIndep;
  return spec;
}

}  // namespace

TEST(Kernel, EpanechnikovIntegrals) {
  const auto k = KernelSpec::epanechnikov();
  EXPECT_NEAR(simpson(k, -1.0, 1.0), 1.0, 1e-10);
  EXPECT_NEAR(simpson([&](double u) { return u * k(u); }, -1.0, 1.0), 0.0, 1e-10);
  EXPECT_NEAR(simpson([&](double u) { return k(u) * k(u); }, -1.0, 1.0), 0.6, 1e-10);
  EXPECT_EQ(k.squared_norm(), 0.6);
  EXPECT_EQ(k(1.5), 0.0);
}

TEST(Kernel, TruncatedGaussianIntegrals) {
  for (double c : {1.0, 2.5, 4.0}) {
    const auto k = KernelSpec::gaussian_truncated(c);
    EXPECT_NEAR(simpson(k, -c, c), 1.0, 1e-10);
    EXPECT_NEAR(simpson([&](double u) { return k(u) * k(u); }, -c, c), k.squared_norm(), 1e-10);
    EXPECT_EQ(k(c + 1e-9), 0.0);
  }
  EXPECT_THROW(KernelSpec::gaussian_truncated(0.0), Error);
}

TEST(NwEstimate, ConstantResponse) {
  const std::vector<double> x{-1.0, 0.0, 0.3, 2.0};
  const std::vector<double> z(4, 3.25);
  EXPECT_DOUBLE_EQ(nw_estimate(x, z, 0.1, 0.7).f_hat, 3.25);
  EXPECT_EQ(nw_estimate({0.0}, {0.0}, 0.0, 0.2).f_hat, 0.0);
}

TEST(NwEstimate, EmptyNeighborhood) {
  try {
    nw_estimate({0.0, 0.1}, {1.0, 2.0}, 5.0, 1.0);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::kEmptyNeighborhood);
  }
  EXPECT_THROW(nw_estimate({0.0}, {1.0, 2.0}, 0.0, 1.0), Error);
  EXPECT_THROW(nw_estimate({0.0}, {1.0}, 0.0, 0.0), Error);
}

TEST(NwEstimate, ReportFields) {
  const std::vector<double> x{0.0, 0.5, 3.0, 7.0};
  const std::vector<double> z{1.0, 3.0, 5.0, 9.0};
  const auto r = nw_estimate(x, z, 0.0, 1.0);
  // K(0) = 0.75, K(0.5) = 0.5625.
  EXPECT_NEAR(r.sum_k, 1.3125, 1e-15);
  EXPECT_NEAR(r.f_hat, (0.75 * 1.0 + 0.5625 * 3.0) / 1.3125, 1e-15);
  EXPECT_EQ(r.t_c, 2U);  // default window [-2.5, 2.5]
  EXPECT_NEAR(r.p_hat_c, r.sum_k / 2.0, 1e-15);
  EXPECT_FALSE(r.studentized.has_value());
}

TEST(NwEstimate, EquivariancesOnRandomInstances) {
  std::mt19937_64 rng(3);
  std::uniform_real_distribution<double> u(-2.0, 2.0);
  const auto k = KernelSpec::epanechnikov();
  for (int trial = 0; trial < 1000; ++trial) {
    const auto inst = random_instance(rng);
    const double base = nw_estimate(inst.x, inst.z, inst.x_eval, inst.h, k).f_hat;
    const double c = u(rng) * 10.0;
    std::vector<double> shifted(inst.z), scaled(inst.z), moved(inst.x);
    for (auto& v : shifted) v += c;
    for (auto& v : scaled) v *= c;
    const double a = u(rng) * 5.0;
    double b = u(rng);
    if (std::abs(b) < 0.1) b = 0.7;
    for (auto& v : moved) v = a + b * v;
    const double scale = 1.0 + std::abs(base) + std::abs(c);
    EXPECT_NEAR(nw_estimate(inst.x, shifted, inst.x_eval, inst.h, k).f_hat, base + c, 1e-12 * scale);
    EXPECT_NEAR(nw_estimate(inst.x, scaled, inst.x_eval, inst.h, k).f_hat, c * base,
                1e-12 * scale * std::max(1.0, std::abs(c)));
    EXPECT_NEAR(nw_estimate(moved, inst.z, a + b * inst.x_eval, std::abs(b) * inst.h, k).f_hat, base,
                1e-12 * (1.0 + std::abs(base)));
  }
}

TEST(NwEstimate, WithinRangeOfWeightedResponses) {
  std::mt19937_64 rng(4);
  for (int trial = 0; trial < 200; ++trial) {
    const auto inst = random_instance(rng);
    const auto r = nw_estimate(inst.x, inst.z, inst.x_eval, inst.h);
    double lo = 1e300, hi = -1e300;
    for (std::size_t t = 0; t < inst.x.size(); ++t) {
      if (std::abs(inst.x[t] - inst.x_eval) < inst.h) {
        lo = std::min(lo, inst.z[t]);
        hi = std::max(hi, inst.z[t]);
      }
    }
    EXPECT_GE(r.f_hat, lo - 1e-12);
    EXPECT_LE(r.f_hat, hi + 1e-12);
  }
}

TEST(Studentized, ZeroAtTruthAndInvariances) {
  const auto k = KernelSpec::epanechnikov();
  const std::vector<double> x{-0.5, 0.0, 0.2, 0.9};
  EXPECT_EQ(studentized(x, std::vector<double>(4, 2.0), 0.0, 1.0, k, 2.0), 0.0);

  std::mt19937_64 rng(5);
  for (int trial = 0; trial < 100; ++trial) {
    const auto inst = random_instance(rng);
    const double f_true = 0.3;
    const double base = studentized(inst.x, inst.z, inst.x_eval, inst.h, k, f_true);
    std::vector<double> z_shift(inst.z);
    for (auto& v : z_shift) v += 7.0;
    EXPECT_NEAR(studentized(inst.x, z_shift, inst.x_eval, inst.h, k, f_true + 7.0), base,
                1e-11 * (1.0 + std::abs(base)));
    std::vector<std::size_t> perm(inst.x.size());
    std::iota(perm.begin(), perm.end(), std::size_t{0});
    std::shuffle(perm.begin(), perm.end(), rng);
    std::vector<double> xp, zp;
    for (auto i : perm) {
      xp.push_back(inst.x[i]);
      zp.push_back(inst.z[i]);
    }
    EXPECT_NEAR(studentized(xp, zp, inst.x_eval, inst.h, k, f_true), base, 1e-11 * (1.0 + std::abs(base)));
  }
}

TEST(LocalBandwidth, UnitAndThirtyTwo) {
  // One point at x_eval: T_C p_hat_C = K(0) / h_ref with h_ref = width / 10.
  const std::vector<double> x{0.0};
  EXPECT_NEAR(local_bandwidth(x, 0.0, Interval{-3.75, 3.75}, 1.7), 1.7, 1e-15);
  const double width = 10.0 * 0.75 / 32.0;
  EXPECT_NEAR(local_bandwidth(x, 0.0, Interval{-width / 2, width / 2}, 1.0), 0.5, 1e-15);
}

TEST(LocalBandwidth, EmptyOccupation) {
  try {
    local_bandwidth({10.0, 11.0}, 0.0, Interval{-1.0, 1.0}, 1.0);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::kEmptyOccupation);
  }
}

TEST(LocalBandwidth, ShrinksWithTheLocalSample) {
  // Local sample grows like n^{1/2}, so quadrupling n scales h by 4^{-1/10}.
  const auto spec = fig1_system();
  const Interval c{-2.5, 2.5};
  double log_ratio = 0.0;
  int used = 0;
  for (std::uint64_t seed = 0; seed < 200; ++seed) {
    const auto data = generate(spec, 40'000, derive_seed(77, seed));
    const std::vector<double> head(data.x.begin(), data.x.begin() + 10'001);
    try {
      const double small = local_bandwidth(head, 0.0, c, 1.0);
      const double large = local_bandwidth(data.x, 0.0, c, 1.0);
      log_ratio += std::log(large / small);
      ++used;
    } catch (const Error&) {
    }
  }
  ASSERT_GT(used, 150);
  const double ratio = std::exp(log_ratio / used);
  EXPECT_GE(ratio, std::pow(4.0, -0.1 * 1.3));
  EXPECT_LE(ratio, std::pow(4.0, -0.1 * 0.7));
}

TEST(CvConstant, DegenerateGrids) {
  std::vector<double> x(30), z(30);
  for (int i = 0; i < 30; ++i) x[i] = z[i] = 0.1 * i;
  EXPECT_EQ(cv_constant(x, z, {2.5}), 2.5);
  EXPECT_THROW(cv_constant(std::vector<double>(10, 0.0), std::vector<double>(10, 0.0), {1.0, 2.0}),
               Error);
  // Points far apart: every leave-one-out neighborhood is empty.
  std::vector<double> far(25);
  for (int i = 0; i < 25; ++i) far[i] = 1000.0 * i;
  try {
    cv_constant(far, far, {0.5, 1.0});
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::kAllNeighborhoodsEmpty);
  }
}

TEST(CvConstant, NoiselessCurvedDataPrefersLeastSmoothing) {
  auto spec = fig1_system();
  spec.params.sigma_eps = 0.0;
  spec.f = TransferFunction::table({-40, -20, -10, 0, 10, 20, 40}, {0, 15, -5, 5, -5, 15, 0});
  const auto data = generate(spec, 3000, 6);
  EXPECT_EQ(cv_constant(data.x, data.z, {0.5, 1.0, 2.0, 4.0}), 0.5);
}

TEST(CvConstant, NoiselessLinearDataPrefersLeastSmoothing) {
  auto spec = fig1_system();
  spec.params.sigma_eps = 0.0;
  const auto data = generate(spec, 3000, 7);
  EXPECT_EQ(cv_constant(data.x, data.z, {0.5, 1.0, 2.0, 4.0}), 0.5);
}

TEST(CvConstant, StableAcrossSeeds) {
  const auto spec = fig1_system();
  std::map<double, int> votes;
  for (std::uint64_t seed = 0; seed < 50; ++seed) {
    const auto data = generate(spec, 2000, derive_seed(88, seed));
    ++votes[cv_constant(data.x, data.z, {0.5, 1.0, 2.0, 4.0})];
  }
  int best = 0;
  for (const auto& [c0, count] : votes) best = std::max(best, count);
  EXPECT_GE(best, 25);
}

TEST(ModalValue, SinglePointAndTieBreak) {
  EXPECT_EQ(modal_value({0.0}), 0.0);
  std::vector<double> data;
  for (int i = 0; i < 50; ++i) {
    const double offset = -0.1 + 0.2 * i / 49.0;
    data.push_back(-5.0 + offset);
    data.push_back(5.0 + offset);
  }
  const double mode = modal_value(data);
  EXPECT_LT(mode, 0.0);
  EXPECT_GE(mode, -5.1);
}

TEST(ModalValue, PicksDenseRegion) {
  std::vector<double> data{-3.0, 1.0, 1.1, 1.2, 1.15, 8.0};
  const double mode = modal_value(data, KernelSpec::epanechnikov(), 0.5);
  EXPECT_GE(mode, 1.0);
  EXPECT_LE(mode, 1.2);
}

TEST(NwEstimate, FixedPointMeanWithLocalTarget) {
  CltProtocol p;
  p.mode = ProtocolMode::kFixedPoint;
  p.x_eval = 7.5;
  p.window = {5.0, 10.0};
  p.sizes = {800};
  p.process = fig1_system();
  p.reps = 400;
  p.admit_target = 200;
  p.base_seed = 2024;
  const auto result = run_clt(p, 800);
  ASSERT_EQ(result.admitted, 200U);
  double mean = 0.0;
  for (const auto& rec : result.records) {
    if (rec.status == RepStatus::kAdmitted) mean += rec.f_hat;
  }
  mean /= 200.0;
  EXPECT_NEAR(mean, 7.5, 0.1);
}
