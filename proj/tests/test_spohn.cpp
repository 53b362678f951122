#include <cmath>
#include <numeric>
#include <random>
#include <vector>

#include <gtest/gtest.h>

#include "meanfield/spohn.hpp"

namespace mf = meanfield;

namespace {

mf::ParticleConfiguration random_config(std::size_t dim, std::size_t n, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> g(0.0, 1.0);
  std::vector<double> c(dim * n);
  for (double& x : c) x = g(rng);
  return mf::ParticleConfiguration(dim, c);
}

std::vector<mf::InteractionKernel> builtin_kernels() {
  return {
      mf::InteractionKernel::zero(2),
      mf::InteractionKernel::linear(1.0, 2),
      mf::InteractionKernel::harmonic_vlasov(1),
      mf::InteractionKernel::smoothed_vlasov(1, mf::PotentialKind::kGaussian, 1.0, 0.6),
      mf::InteractionKernel::smoothed_biot_savart(0.5),
  };
}

}  // namespace

TEST(Monomial, UnitAndConstant) {
  const mf::DiscreteMeasure f(1, {0.0, 1.0}, {0.3, 0.7});
  EXPECT_EQ(mf::monomial_eval(mf::MonomialObservable(), f), 1.0);
  EXPECT_NEAR(mf::monomial_eval(mf::MonomialObservable(mf::TestFunctionM::constant(1, 3)), f), 1.0, 1e-15);
}

TEST(Monomial, DiracEvaluatesOnDiagonal) {
  const auto phi = mf::TestFunctionM::gaussian_pair(2);
  EXPECT_EQ(mf::monomial_eval(mf::MonomialObservable(phi), mf::DiscreteMeasure::dirac({0.4, 1.0})), 1.0);
  const auto cos3 = mf::TestFunctionM::cosine_product({0.5, 1.0}, 3);
  const std::vector<double> a{0.4, 1.0};
  EXPECT_DOUBLE_EQ(mf::monomial_eval(mf::MonomialObservable(cos3), mf::DiscreteMeasure::dirac(a)),
                   std::pow(std::cos(0.2 + 1.0), 3));
}

TEST(Monomial, MatchesDoubleSum) {
  const mf::DiscreteMeasure f(1, {0.0, 1.0, -0.5, 2.0}, {0.1, 0.2, 0.3, 0.4});
  double direct = 0.0;
  for (std::size_t i = 0; i < 4; ++i)
    for (std::size_t j = 0; j < 4; ++j) {
      const double u = f.point(i)[0] - f.point(j)[0];
      direct += f.weight(i) * f.weight(j) * std::exp(-0.5 * u * u);
    }
  EXPECT_NEAR(mf::monomial_eval(mf::MonomialObservable(mf::TestFunctionM::gaussian_pair(1)), f), direct, 1e-15);
}

TEST(Monomial, PermutationInvariantExactly) {
  std::mt19937_64 rng(4);
  std::normal_distribution<double> g;
  std::uniform_real_distribution<double> u(0.1, 1.0);
  std::vector<double> c(2 * 30), w(30);
  for (double& x : c) x = g(rng);
  for (double& x : w) x = u(rng);
  const mf::DiscreteMeasure f(2, c, mf::normalized(w));
  std::vector<std::size_t> perm(30);
  std::iota(perm.begin(), perm.end(), std::size_t{0});
  std::shuffle(perm.begin(), perm.end(), rng);
  std::vector<double> pc, pw;
  for (std::size_t i : perm) {
    pc.insert(pc.end(), f.point(i).begin(), f.point(i).end());
    pw.push_back(f.weight(i));
  }
  const mf::DiscreteMeasure fp(2, pc, pw);
  const mf::MonomialObservable obs(mf::TestFunctionM::poly_bump({0.0, 0.0}, 1.5, 3));
  EXPECT_EQ(mf::monomial_eval(obs, f), mf::monomial_eval(obs, fp));
}

TEST(Monomial, CapacityError) {
  const auto f = mf::DiscreteMeasure::empirical(random_config(1, 200, 1));
  EXPECT_THROW(mf::monomial_eval(mf::MonomialObservable(mf::TestFunctionM::cosine_product({1.0}, 3)), f),
               mf::CapacityError);
}

TEST(Liouville, ZeroKernelBothSidesVanish) {
  const auto r = mf::liouville_identity_check(mf::InteractionKernel::zero(2), random_config(2, 5, 2),
                                              mf::TestFunctionM::gaussian_pair(2), 0.5);
  EXPECT_EQ(r.lhs, 0.0);
  EXPECT_EQ(r.rhs, 0.0);
  EXPECT_EQ(r.residual, 0.0);
}

TEST(Liouville, AlgebraicAtTimeZero) {
  for (const auto& k : builtin_kernels()) {
    const auto r = mf::liouville_identity_check(k, random_config(2, 6, 3),
                                                mf::TestFunctionM::cosine_product({0.7, -0.4}, 2), 0.0);
    EXPECT_LE(r.residual, 1e-10) << k.name();
  }
}

TEST(Liouville, FlowedIdentity) {
  for (const auto& k : builtin_kernels()) {
    for (double s : {0.5, -0.5, 1.0}) {
      const auto r = mf::liouville_identity_check(k, random_config(2, 4, 5),
                                                  mf::TestFunctionM::poly_bump({0.0, 0.0}, 2.5, 2), s);
      EXPECT_LE(r.residual, 1e-6) << k.name() << " s=" << s;
    }
  }
}

TEST(Liouville, LinearAgainstClosedFormJacobian) {
  // a_lk = delta_lk e^{cs} + (1 - e^{cs}) / n in d = 1.
  const double c = 1.0, s = 0.5;
  const std::size_t n = 4;
  const auto k = mf::InteractionKernel::linear(c, 1);
  const auto z = random_config(1, n, 6);
  const auto phi = mf::TestFunctionM::cosine_product({0.8}, 2);
  const auto r = mf::liouville_identity_check(k, z, phi, s, 1e-3);
  EXPECT_LE(r.residual, 1e-6);

  const double e = std::exp(c * s);
  const double zbar = z.barycenter()[0];
  std::vector<double> image(n), grad_phi(n, 0.0);
  for (std::size_t l = 0; l < n; ++l) image[l] = zbar + e * (z.coords()[l] - zbar);
  phi.gradient(std::span<const double>(image).subspan(0, 2), std::span<double>(grad_phi).subspan(0, 2));
  double lhs = 0.0;
  for (std::size_t kk = 0; kk < n; ++kk) {
    double g = 0.0;
    for (std::size_t l = 0; l < n; ++l) g += ((l == kk ? e : 0.0) + (1.0 - e) / n) * grad_phi[l];
    lhs += c * (z.coords()[kk] - zbar) * g;
  }
  EXPECT_NEAR(r.lhs, lhs, 1e-7);
}

TEST(JacobianBound, ZeroKernelRatio) {
  const auto r = mf::jacobian_bound_report(mf::InteractionKernel::zero(2), 4, 1.0, 6, 1);
  EXPECT_LE(r.worst_ratio, 2.0 / 3.0 + 1e-9);
  EXPECT_LE(r.worst_alpha_excess, 1e-9);
  EXPECT_TRUE(r.pass);
}

TEST(JacobianBound, LinearHandArithmetic) {
  // Off-diagonal entries (e - 1)/4 sit below e^3/8; diagonal e + (1 - e)/4
  // below e + e^3/8.
  const double e = std::exp(1.0);
  EXPECT_LE((e - 1.0) / 4.0, std::exp(3.0) / 8.0);
  const auto r = mf::jacobian_bound_report(mf::InteractionKernel::linear(1.0, 1), 4, 1.0, 5, 2);
  EXPECT_NEAR(r.worst_alpha_excess, std::max(e + (1 - e) / 4 - e - std::exp(3.0) / 8,
                                             (e - 1) / 4 - std::exp(3.0) / 8),
              1e-6);
  EXPECT_TRUE(r.pass);
}

TEST(JacobianBound, HarmonicSweep) {
  const auto r = mf::jacobian_bound_report(mf::InteractionKernel::harmonic_vlasov(1), 16, 1.0, 50, 3);
  EXPECT_TRUE(r.pass) << r.worst_ratio << " " << r.worst_alpha_excess << " " << r.worst_beta_excess;
}

TEST(JacobianBound, SmoothedKernels) {
  for (const auto& k : {mf::InteractionKernel::smoothed_vlasov(1, mf::PotentialKind::kGaussian, 1.0, 0.6),
                        mf::InteractionKernel::smoothed_biot_savart(0.5)}) {
    const auto r = mf::jacobian_bound_report(k, 6, 0.5, 3, 4, 1e-3, 1e-2);
    EXPECT_TRUE(r.pass) << k.name();
  }
}

TEST(StatisticalSolution, MonomialsOfPushforwardMatchLargeSystems) {
  // <V_t # P, M_2[phi]> against E phi(z_1, z_2) for N-particle systems drawn
  // from P and propagated; the gap shrinks as N grows.
  const auto k = mf::InteractionKernel::linear(1.5, 1);
  const auto f = mf::quantize_1d(mf::DensitySpec::gaussian({-0.5}, {0.5}), 64);
  const auto g = mf::quantize_1d(mf::DensitySpec::gaussian({0.8}, {0.2}), 64);
  const auto p = mf::MeasureEnsemble::uniform({f, g});
  const double t = 1.0;
  const mf::FlowParams params{1e-2, t};
  const auto phi = mf::TestFunctionM::gaussian_pair(1);
  const double target = mf::ensemble_monomial(mf::MonomialObservable(phi),
                                              mf::statistical_pushforward(p, k, params));
  std::vector<double> gap;
  for (std::size_t n : {4, 64}) {
    const auto ens = mf::propagate_ensemble(mf::qn_projection(p, n, 2000, 5), k, params);
    const auto est = mf::marginal_pair(ens, phi);
    gap.push_back(std::abs(est.value - target));
    if (n == 64) {
      EXPECT_LE(gap.back(), 3.0 * est.std_error + 0.01);
    }
  }
  EXPECT_LT(gap[1], gap[0]);
}
