#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>
#include <vector>

#include <gtest/gtest.h>

#include "meanfield/hierarchy.hpp"

namespace mf = meanfield;

namespace {

mf::Ensemble gaussian_ensemble(std::size_t dim, std::size_t n, std::size_t s, std::uint64_t seed) {
  return mf::sample_product_ensemble(mf::DensitySpec::standard_gaussian(dim), n, s, seed);
}

double combined_sigma(const mf::MeanAndError& lhs, double pf, const mf::MeanAndError& marg,
                      const mf::MeanAndError& defect) {
  return std::sqrt(lhs.std_error * lhs.std_error + pf * pf * marg.std_error * marg.std_error +
                   defect.std_error * defect.std_error);
}

}  // namespace

TEST(CombinatorialPrefactor, HandValues) {
  auto p = mf::combinatorial_prefactor(3, 2);
  EXPECT_NEAR(p.prefactor, 2.0 / 3.0, 1e-15);
  EXPECT_NEAR(p.defect_bound, 1.0 / 3.0, 1e-15);
  p = mf::combinatorial_prefactor(10, 3);
  EXPECT_NEAR(p.prefactor, 0.72, 1e-15);
  EXPECT_NEAR(p.defect_bound, 0.3, 1e-15);
  p = mf::combinatorial_prefactor(17, 1);
  EXPECT_EQ(p.prefactor, 1.0);
  EXPECT_EQ(p.defect_bound, 0.0);
  EXPECT_THROW(mf::combinatorial_prefactor(3, 4), mf::ArgumentError);
}

TEST(CombinatorialPrefactor, DefectWithinBoundAndMonotone) {
  for (std::size_t n = 1; n <= 60; ++n) {
    for (std::size_t m = 1; m <= n; ++m) {
      const auto p = mf::combinatorial_prefactor(n, m);
      EXPECT_LE(1.0 - p.prefactor, p.defect_bound + 1e-15) << n << " " << m;
      if (m > 1) {
        EXPECT_LE(p.prefactor, mf::combinatorial_prefactor(n, m - 1).prefactor);
      }
      EXPECT_GE(mf::combinatorial_prefactor(n + 1, m).prefactor, p.prefactor);
    }
  }
}

TEST(SampleEnsemble, DegenerateBoxGivesIdenticalParticles) {
  const auto f = mf::DensitySpec::uniform({0.5, -1.0}, {0.5, -1.0});
  const auto ens = mf::sample_product_ensemble(f, 5, 3, 1);
  for (const auto& z : ens.samples)
    for (std::size_t k = 0; k < z.count(); ++k) {
      EXPECT_EQ(z.point(k)[0], 0.5);
      EXPECT_EQ(z.point(k)[1], -1.0);
    }
}

TEST(SampleEnsemble, PooledGaussianMean) {
  const std::size_t n = 32, s = 256;
  const auto ens = gaussian_ensemble(1, n, s, 7);
  EXPECT_LE(std::abs(mf::pooled_cloud(ens).barycenter()[0]), 4.0 / std::sqrt(double(n * s)));
}

TEST(SampleEnsemble, SeedsAreReproducibleAndDistinct) {
  const auto a = gaussian_ensemble(2, 4, 3, 11);
  const auto b = gaussian_ensemble(2, 4, 3, 11);
  const auto c = gaussian_ensemble(2, 4, 3, 12);
  for (std::size_t s = 0; s < 3; ++s) {
    EXPECT_EQ(a.samples[s], b.samples[s]);
    EXPECT_NE(a.samples[s], c.samples[s]);
  }
  EXPECT_NE(a.samples[0], a.samples[1]);
}

TEST(SampleEnsemble, InvalidDensityRejected) {
  EXPECT_THROW(mf::DensitySpec::gaussian({0.0, 0.0}, {1.0, 2.0, 2.0, 1.0}), mf::ArgumentError);
  EXPECT_THROW(mf::DensitySpec::uniform({1.0}, {0.0}), mf::ArgumentError);
  EXPECT_THROW(mf::sample_product_ensemble(mf::DensitySpec::standard_gaussian(1), 0, 3, 1),
               mf::ArgumentError);
}

TEST(PropagateEnsemble, ZeroKernelUnchanged) {
  const auto ens = gaussian_ensemble(2, 6, 4, 3);
  const auto out = mf::propagate_ensemble(ens, mf::InteractionKernel::zero(2), {1e-2, 1.0});
  for (std::size_t s = 0; s < ens.size(); ++s) EXPECT_EQ(out.samples[s], ens.samples[s]);
  EXPECT_DOUBLE_EQ(out.time, 1.0);
}

TEST(PropagateEnsemble, MatchesDirectFlowAndPreservesSymmetry) {
  const auto k = mf::InteractionKernel::smoothed_biot_savart(0.5);
  const auto ens = gaussian_ensemble(2, 7, 3, 5);
  const mf::FlowParams params{1e-2, 0.5};
  const auto out = mf::propagate_ensemble(ens, k, params);
  EXPECT_EQ(out.samples[0], mf::integrate_flow(k, ens.samples[0], params));

  std::vector<std::size_t> perm{3, 0, 6, 1, 5, 2, 4};
  auto permuted = ens;
  for (auto& z : permuted.samples) z = z.permuted(perm);
  const auto out_p = mf::propagate_ensemble(permuted, k, params);
  for (std::size_t s = 0; s < ens.size(); ++s) EXPECT_EQ(out_p.samples[s], out.samples[s].permuted(perm));
}

TEST(PropagateEnsemble, BlowUpNamesSample) {
  auto ens = gaussian_ensemble(1, 2, 2, 1);
  try {
    mf::propagate_ensemble(ens, mf::InteractionKernel::linear(1e3, 1), {1.0, 400.0});
    FAIL();
  } catch (const mf::NumericalError& e) {
    EXPECT_NE(std::string(e.what()).find("sample 0"), std::string::npos);
  }
}

TEST(MarginalPair, ConstantIsOne) {
  const auto ens = gaussian_ensemble(2, 5, 10, 2);
  const auto r = mf::marginal_pair(ens, mf::TestFunctionM::constant(2, 3));
  EXPECT_EQ(r.value, 1.0);
  EXPECT_EQ(r.std_error, 0.0);
}

TEST(MarginalPair, SingleParticleMatchesPooledAverage) {
  const auto ens = gaussian_ensemble(2, 6, 40, 3);
  const auto phi = mf::TestFunctionM::clipped_norm_power(2, 1.0, 1.5);
  double direct = 0.0;
  for (const auto& z : ens.samples)
    for (std::size_t k = 0; k < z.count(); ++k) direct += std::min(mf::norm(z.point(k)), 1.5);
  direct /= 6.0 * 40.0;
  EXPECT_NEAR(mf::marginal_pair(ens, phi).value, direct, 1e-13);
}

TEST(MarginalPair, ExchangeabilityInvariance) {
  const auto ens = gaussian_ensemble(1, 6, 20, 4);
  auto permuted = ens;
  std::mt19937_64 rng(9);
  for (auto& z : permuted.samples) {
    std::vector<std::size_t> perm(6);
    std::iota(perm.begin(), perm.end(), std::size_t{0});
    std::shuffle(perm.begin(), perm.end(), rng);
    z = z.permuted(perm);
  }
  for (const auto& phi : {mf::TestFunctionM::gaussian_pair(1),
                          mf::TestFunctionM::cosine_product({0.7}, 3)}) {
    EXPECT_NEAR(mf::marginal_pair(ens, phi).value, mf::marginal_pair(permuted, phi).value, 1e-13);
    EXPECT_NEAR(mf::tensorized_empirical_pair(ens, phi).value,
                mf::tensorized_empirical_pair(permuted, phi).value, 1e-13);
  }
}

TEST(MarginalPair, ArityAboveNRejected) {
  const auto ens = gaussian_ensemble(1, 2, 3, 1);
  EXPECT_THROW(mf::marginal_pair(ens, mf::TestFunctionM::cosine_product({1.0}, 3)),
               mf::ArgumentError);
  EXPECT_THROW(mf::tensorized_empirical_pair(ens, mf::TestFunctionM::cosine_product({1.0}, 3)),
               mf::ArgumentError);
}

TEST(MarginalPair, MomentBoundAlongFlow) {
  const auto k = mf::InteractionKernel::harmonic_vlasov(1);
  const auto ens = gaussian_ensemble(2, 8, 512, 6);
  const double t = 1.0;
  const auto later = mf::propagate_ensemble(ens, k, {1e-2, t});
  for (double r : {1.0, 2.0}) {
    const auto phi = mf::TestFunctionM::clipped_norm_power(2, r, 1e6);
    const auto v0 = mf::marginal_pair(ens, phi);
    const auto vt = mf::marginal_pair(later, phi);
    const double grow = std::exp(2.0 * k.lipschitz() * r * t);
    EXPECT_LE(vt.value, grow * v0.value + 3.0 * std::hypot(vt.std_error, grow * v0.std_error));
  }
}

TEST(TensorizedPair, ConstantIsOne) {
  const auto ens = gaussian_ensemble(1, 4, 10, 2);
  EXPECT_EQ(mf::tensorized_empirical_pair(ens, mf::TestFunctionM::constant(1, 2)).value, 1.0);
}

TEST(TensorizedPair, SingleParticleEqualsMarginal) {
  const auto ens = gaussian_ensemble(2, 9, 25, 8);
  const auto phi = mf::TestFunctionM::poly_bump({0.1, -0.2}, 1.5, 1);
  EXPECT_EQ(mf::tensorized_empirical_pair(ens, phi).value, mf::marginal_pair(ens, phi).value);
  EXPECT_EQ(mf::defect_term(ens, phi).value, 0.0);
}

TEST(TensorizedPair, MatchesDirectDoubleSum) {
  const auto ens = gaussian_ensemble(1, 5, 12, 9);
  const auto phi = mf::TestFunctionM::gaussian_pair(1);
  double total = 0.0;
  for (const auto& z : ens.samples) {
    double s = 0.0;
    for (std::size_t i = 0; i < 5; ++i)
      for (std::size_t j = 0; j < 5; ++j) {
        const double u = z.point(i)[0] - z.point(j)[0];
        s += std::exp(-0.5 * u * u);
      }
    total += s / 25.0;
  }
  EXPECT_NEAR(mf::tensorized_empirical_pair(ens, phi).value, total / 12.0, 1e-14);
}

TEST(TensorizedPair, ThreeParticleDecomposition) {
  // For the constant function the defect is exactly 1 - 2/3.
  const auto ens = gaussian_ensemble(1, 3, 4, 10);
  const auto one = mf::TestFunctionM::constant(1, 2);
  EXPECT_NEAR(mf::defect_term(ens, one).value, 1.0 / 3.0, 1e-15);
  const auto phi = mf::TestFunctionM::cosine_product({1.3}, 2);
  const double lhs = mf::tensorized_empirical_pair(ens, phi).value;
  const double rhs = 2.0 / 3.0 * mf::marginal_pair(ens, phi).value + mf::defect_term(ens, phi).value;
  EXPECT_NEAR(lhs, rhs, 1e-14);
}

TEST(TensorizedPair, IdentityWithinMonteCarloError) {
  const auto ens = mf::propagate_ensemble(gaussian_ensemble(2, 8, 2000, 11),
                                          mf::InteractionKernel::harmonic_vlasov(1), {1e-2, 0.5});
  const auto pf = mf::combinatorial_prefactor(8, 2).prefactor;
  for (const auto& phi : {mf::TestFunctionM::gaussian_pair(2),
                          mf::TestFunctionM::cosine_product({0.8, -0.5}, 2),
                          mf::TestFunctionM::poly_bump({0.0, 0.0}, 2.0, 2)}) {
    const auto lhs = mf::tensorized_empirical_pair(ens, phi);
    const auto marg = mf::marginal_pair(ens, phi);
    const auto def = mf::defect_term(ens, phi);
    EXPECT_LE(std::abs(lhs.value - (pf * marg.value + def.value)),
              3.0 * combined_sigma(lhs, pf, marg, def) + 1e-14)
        << phi.name();
  }
}

TEST(TensorizedPair, SampledPathForLargeN) {
  // 1100^2 maps exceed the exact limit, so all three estimators sample.
  const std::size_t n = 1100;
  const auto ens = gaussian_ensemble(1, n, 24, 12);
  const auto phi = mf::TestFunctionM::gaussian_pair(1);
  const auto pf = mf::combinatorial_prefactor(n, 2).prefactor;
  const auto lhs = mf::tensorized_empirical_pair(ens, phi);
  const auto marg = mf::marginal_pair(ens, phi);
  const auto def = mf::defect_term(ens, phi);
  EXPECT_GT(lhs.std_error, 0.0);
  // The defect of the Gaussian pair on the diagonal is exactly (1 - pf).
  EXPECT_NEAR(def.value, 1.0 - pf, 1e-15);
  EXPECT_LE(std::abs(lhs.value - (pf * marg.value + def.value)),
            3.0 * combined_sigma(lhs, pf, marg, def) + 1e-3);
}

TEST(Chaoticity, PoolAgainstItselfIsZero) {
  const auto ens = gaussian_ensemble(1, 8, 16, 13);
  EXPECT_EQ(mf::chaoticity_distance(ens, mf::pooled_cloud(ens)), 0.0);
  const auto ens2 = gaussian_ensemble(2, 8, 4, 13);
  EXPECT_NEAR(mf::chaoticity_distance(ens2, mf::pooled_cloud(ens2)), 0.0, 1e-12);
}

TEST(Chaoticity, ZeroKernelDistanceShrinksWithPool) {
  const auto f = mf::DensitySpec::standard_gaussian(1);
  const auto ref = mf::quantize_1d(f, 1 << 15);
  double prev = std::numeric_limits<double>::infinity();
  for (std::size_t s : {64, 256, 1024}) {
    const auto ens = mf::sample_product_ensemble(f, 64, s, 14);
    const double d = mf::chaoticity_distance(ens, ref);
    EXPECT_LT(d, prev);
    prev = d;
  }
  EXPECT_LT(prev, 0.02);
}

TEST(Chaoticity, BatchesReportSpread) {
  const auto f = mf::DensitySpec::standard_gaussian(1);
  const auto ens = mf::sample_product_ensemble(f, 16, 256, 15);
  const auto r = mf::chaoticity_batches(ens, mf::quantize_1d(f, 4096), 8);
  EXPECT_GT(r.value, 0.0);
  EXPECT_GT(r.std_error, 0.0);
}

TEST(Density, QuantizedGaussianMoments) {
  const auto q = mf::quantize_1d(mf::DensitySpec::gaussian({1.0}, {4.0}), 20000);
  EXPECT_NEAR(q.barycenter()[0], 1.0, 1e-12);
  const auto centered = q.translated(std::vector<double>{-1.0});
  EXPECT_NEAR(centered.moment(2.0), 4.0, 2e-3);
}

TEST(Density, MixtureQuantileInvertsCdf) {
  const auto f = mf::DensitySpec::mixture({{0.3, {{-2.0}, {0.25}}}, {0.7, {{1.0}, {1.0}}}});
  for (double u : {0.01, 0.2, 0.3, 0.5, 0.9, 0.999}) EXPECT_NEAR(f.cdf(f.quantile(u)), u, 1e-12);
}

TEST(Density, CorrelatedGaussianSampleCovariance) {
  const auto f = mf::DensitySpec::gaussian({0.0, 0.0}, {2.0, 0.8, 0.8, 1.0});
  mf::Rng rng(3);
  const auto z = mf::sample_points(f, 40000, rng);
  double sxx = 0, sxy = 0, syy = 0;
  for (std::size_t k = 0; k < z.count(); ++k) {
    sxx += z.point(k)[0] * z.point(k)[0];
    sxy += z.point(k)[0] * z.point(k)[1];
    syy += z.point(k)[1] * z.point(k)[1];
  }
  const double n = static_cast<double>(z.count());
  EXPECT_NEAR(sxx / n, 2.0, 0.06);
  EXPECT_NEAR(sxy / n, 0.8, 0.04);
  EXPECT_NEAR(syy / n, 1.0, 0.03);
}

TEST(TestFunctions, BoundsAndLipschitzOnSamples) {
  std::mt19937_64 rng(21);
  std::normal_distribution<double> g(0.0, 1.5);
  const std::vector<mf::TestFunctionM> phis{
      mf::TestFunctionM::constant(2, 2, -0.5),
      mf::TestFunctionM::cosine_product({0.7, -1.1}, 3),
      mf::TestFunctionM::gaussian_pair(2),
      mf::TestFunctionM::clipped_norm_power(2, 2.0, 3.0),
      mf::TestFunctionM::poly_bump({0.2, 0.1}, 1.2, 2),
  };
  for (const auto& phi : phis) {
    const std::size_t len = phi.dim() * static_cast<std::size_t>(phi.arity());
    for (int t = 0; t < 2000; ++t) {
      std::vector<double> a(len), b(len);
      for (std::size_t i = 0; i < len; ++i) {
        a[i] = g(rng);
        b[i] = a[i] + (t % 2 ? 1e-3 : 1.0) * g(rng);
      }
      EXPECT_LE(std::abs(phi(a)), phi.bound() + 1e-15) << phi.name();
      EXPECT_LE(std::abs(phi(a) - phi(b)), phi.lip() * mf::distance(a, b) * (1 + 1e-9) + 1e-15)
          << phi.name();
    }
  }
}

TEST(TestFunctions, GradientsMatchFiniteDifferences) {
  std::mt19937_64 rng(22);
  std::normal_distribution<double> g(0.0, 0.6);
  const std::vector<mf::TestFunctionM> phis{
      mf::TestFunctionM::cosine_product({0.7, -1.1}, 3),
      mf::TestFunctionM::gaussian_pair(2),
      mf::TestFunctionM::poly_bump({0.2, 0.1}, 1.2, 2),
  };
  for (const auto& phi : phis) {
    const std::size_t len = phi.dim() * static_cast<std::size_t>(phi.arity());
    for (int t = 0; t < 50; ++t) {
      std::vector<double> z(len), grad(len);
      for (double& x : z) x = g(rng);
      phi.gradient(z, grad);
      for (std::size_t i = 0; i < len; ++i) {
        auto zp = z, zm = z;
        zp[i] += 1e-5;
        zm[i] -= 1e-5;
        EXPECT_NEAR(grad[i], (phi(zp) - phi(zm)) / 2e-5, 1e-6) << phi.name();
      }
      for (std::size_t j = 0; j < static_cast<std::size_t>(phi.arity()); ++j)
        EXPECT_LE(mf::norm(std::span<const double>(grad).subspan(j * phi.dim(), phi.dim())),
                  phi.partial_sup() + 1e-12);
    }
  }
  EXPECT_FALSE(mf::TestFunctionM::clipped_norm_power(1, 1.0, 1.0).has_gradient());
}
