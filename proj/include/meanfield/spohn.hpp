#ifndef MEANFIELD_SPOHN_HPP
#define MEANFIELD_SPOHN_HPP

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <numeric>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include "meanfield/core.hpp"
#include "meanfield/dynamics.hpp"
#include "meanfield/ensembles.hpp"
#include "meanfield/kernels.hpp"
#include "meanfield/points.hpp"
#include "meanfield/test_functions.hpp"

namespace meanfield {

// Largest number of m-tuples summed by monomial_eval.
inline constexpr double kMonomialTupleLimit = 1e6;

// f -> integral of phi over f^{(x)m}; with no test function it is the
// constant 1 (m = 0).
class MonomialObservable {
 public:
  MonomialObservable() = default;
  explicit MonomialObservable(TestFunctionM phi) : phi_(std::move(phi)) {}

  int m() const noexcept { return phi_ ? phi_->arity() : 0; }
  const std::optional<TestFunctionM>& phi() const noexcept { return phi_; }

 private:
  std::optional<TestFunctionM> phi_;
};

// Sum over all m-tuples of support atoms of phi * w_{i1} ... w_{im}. Atoms are
// enumerated in a canonical (lexicographic) order, so relabelling the support
// does not change the result.
inline double monomial_eval(const MonomialObservable& obs, const DiscreteMeasure& f) {
  if (obs.m() == 0) return 1.0;
  const TestFunctionM& phi = *obs.phi();
  require(phi.dim() == f.dim(), "monomial_eval: dimension mismatch");
  const std::size_t m = static_cast<std::size_t>(obs.m());
  const std::size_t n = f.size();
  if (std::pow(static_cast<double>(n), static_cast<double>(m)) > kMonomialTupleLimit)
    throw CapacityError("monomial_eval: " + std::to_string(n) + "^" + std::to_string(m) +
                        " tuples exceed capacity");
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    if (lex_less(f.point(a), f.point(b))) return true;
    if (lex_less(f.point(b), f.point(a))) return false;
    return f.weight(a) < f.weight(b);
  });
  const std::size_t d = f.dim();
  std::vector<double> buf(m * d), terms;
  terms.reserve(static_cast<std::size_t>(std::pow(static_cast<double>(n), static_cast<double>(m))));
  detail::for_each_map(n, m, [&](std::span<const std::size_t> idx) {
    double w = 1.0;
    for (std::size_t a = 0; a < m; ++a) {
      const std::size_t atom = order[idx[a]];
      w *= f.weight(atom);
      std::copy_n(f.point(atom).data(), d, buf.data() + a * d);
    }
    terms.push_back(w * phi(buf));
  });
  return pairwise_sum(terms);
}

// <P, M_m[phi]> for a law on measures.
inline double ensemble_monomial(const MonomialObservable& obs, const MeasureEnsemble& p) {
  p.check();
  std::vector<double> terms(p.size());
  parallel_for(p.size(), [&](std::size_t i) { terms[i] = p.weights[i] * monomial_eval(obs, p.members[i]); });
  return pairwise_sum(terms);
}

struct LiouvilleResult {
  double lhs = 0.0;  // mean over l of A_n[z_l] psi
  double rhs = 0.0;  // L_n psi
  double residual = 0.0;
};

// psi = phi o T_s with phi acting on the first m particles.
//
// lhs: sum_k F_k(Z) . grad_k psi(Z), with F_k the force of the empirical
//      measure of Z on z_k and grad psi from the finite-difference Jacobian.
// rhs: the derivative of psi along the flow, which by the group property is
//      grad phi(T_s Z) . v(T_s Z) with v the N-body vector field.
inline LiouvilleResult liouville_identity_check(const InteractionKernel& kernel,
                                                const ParticleConfiguration& z,
                                                const TestFunctionM& phi, double s,
                                                std::optional<double> dt = std::nullopt,
                                                double h_rel = 1e-5) {
  require(phi.has_gradient(), "liouville_identity_check: test function needs a gradient");
  require(phi.dim() == z.dim(), "liouville_identity_check: dimension mismatch");
  const std::size_t n = z.count(), d = z.dim();
  const std::size_t m = static_cast<std::size_t>(phi.arity());
  require(m <= n, "liouville_identity_check: arity exceeds particle count");

  const FlowParams params{dt.value_or(default_dt(kernel)), s, Method::kRK4};
  const ParticleConfiguration image = s == 0.0 ? z : integrate_flow(kernel, z, params);

  std::vector<double> grad_phi(n * d, 0.0);
  phi.gradient(std::span<const double>(image.coords()).subspan(0, m * d),
               std::span<double>(grad_phi).subspan(0, m * d));

  std::vector<double> grad_psi = grad_phi;
  if (s != 0.0) grad_psi = flow_jacobian_fd(kernel, z, s, h_rel, params.dt).pull_back(grad_phi);

  const DiscreteMeasure empirical = DiscreteMeasure::empirical(z);
  std::vector<double> lhs_terms(n);
  for (std::size_t k = 0; k < n; ++k) {
    const auto force = mean_field_force(kernel, empirical, z.point(k));
    double t = 0.0;
    for (std::size_t c = 0; c < d; ++c) t += force[c] * grad_psi[k * d + c];
    lhs_terms[k] = t;
  }

  const std::vector<double> v = nbody_rhs(kernel, image);
  std::vector<double> rhs_terms(m * d);
  for (std::size_t i = 0; i < m * d; ++i) rhs_terms[i] = grad_phi[i] * v[i];

  LiouvilleResult r;
  r.lhs = pairwise_sum(lhs_terms);
  r.rhs = pairwise_sum(rhs_terms);
  r.residual = std::abs(r.lhs - r.rhs);
  return r;
}

struct JacobianBoundReport {
  std::string kernel;
  std::size_t n = 0;
  double s = 0.0;
  int trials = 0;
  double worst_ratio = 0.0;         // observed gradient sum / bound
  double worst_alpha_excess = 0.0;  // max of |a_lk| - (delta e^{Ls} + e^{3Ls}/(2n))
  double worst_beta_excess = 0.0;   // max of mean_l |a_lk| - e^{2Ls}/n
  double margin = 1e-3;
  bool alpha_pass = false;
  bool beta_pass = false;
  bool pass = false;
};

// The differentiable test functions cycled through by jacobian_bound_report.
inline std::vector<TestFunctionM> bound_test_functions(std::size_t dim, std::size_t n) {
  std::vector<double> freq(dim), center(dim, 0.0);
  for (std::size_t i = 0; i < dim; ++i) freq[i] = (i % 2 ? -0.6 : 0.9);
  const int m = n >= 2 ? 2 : 1;
  std::vector<TestFunctionM> out{TestFunctionM::cosine_product(freq, m),
                                 TestFunctionM::poly_bump(center, 2.0, m)};
  if (n >= 2) out.push_back(TestFunctionM::gaussian_pair(dim));
  return out;
}

// Random standard-normal configurations of n particles; block norms are
// spectral norms.
inline JacobianBoundReport jacobian_bound_report(const InteractionKernel& kernel, std::size_t n,
                                                 double s, int trials, std::uint64_t seed,
                                                 double margin = 1e-3,
                                                 std::optional<double> dt = std::nullopt) {
  require(trials >= 1, "jacobian_bound_report: trials must be >= 1");
  require(n >= 2, "jacobian_bound_report: n must be >= 2");
  const std::size_t d = static_cast<std::size_t>(kernel.dim());
  const double big_l = kernel.lipschitz(), as = std::abs(s);
  const double nd = static_cast<double>(n);
  const double diag_growth = std::exp(big_l * as);
  const double cross = std::exp(3.0 * big_l * as) / (2.0 * nd);
  const double beta_bound = std::exp(2.0 * big_l * as) / nd;
  const double chain = diag_growth + 0.5 * std::exp(3.0 * big_l * as);
  const auto phis = bound_test_functions(d, n);

  std::vector<double> ratio(static_cast<std::size_t>(trials)), alpha(ratio.size()), beta(ratio.size());
  for (std::size_t t = 0; t < ratio.size(); ++t) {
    Rng rng = make_rng(seed, Stream::kTrials, t);
    std::normal_distribution<double> g(0.0, 1.0);
    std::vector<double> coords(n * d);
    for (double& x : coords) x = g(rng);
    const ParticleConfiguration z(d, std::move(coords));
    const FlowJacobian jac = flow_jacobian_fd(kernel, z, s, 1e-5, dt);

    double worst_a = -std::numeric_limits<double>::infinity();
    double worst_b = -std::numeric_limits<double>::infinity();
    for (std::size_t k = 0; k < n; ++k) {
      std::vector<double> col(n);
      for (std::size_t l = 0; l < n; ++l) {
        col[l] = jac.block_norm(l, k);
        worst_a = std::max(worst_a, col[l] - ((l == k ? diag_growth : 0.0) + cross));
      }
      worst_b = std::max(worst_b, pairwise_sum(col) / nd - beta_bound);
    }
    alpha[t] = worst_a;
    beta[t] = worst_b;

    const TestFunctionM& phi = phis[t % phis.size()];
    const std::size_t m = static_cast<std::size_t>(phi.arity());
    const FlowParams params{dt.value_or(default_dt(kernel)), s, Method::kRK4};
    const ParticleConfiguration image = s == 0.0 ? z : integrate_flow(kernel, z, params);
    std::vector<double> grad_phi(n * d, 0.0);
    phi.gradient(std::span<const double>(image.coords()).subspan(0, m * d),
                 std::span<double>(grad_phi).subspan(0, m * d));
    const std::vector<double> grad_psi = jac.pull_back(grad_phi);
    std::vector<double> block_norms(n);
    for (std::size_t k = 0; k < n; ++k)
      block_norms[k] = norm(std::span<const double>(grad_psi).subspan(k * d, d));
    const double denom = chain * static_cast<double>(m) * phi.partial_sup();
    ratio[t] = denom > 0.0 ? pairwise_sum(block_norms) / denom : 0.0;
  }

  JacobianBoundReport r;
  r.kernel = kernel.name();
  r.n = n;
  r.s = s;
  r.trials = trials;
  r.margin = margin;
  r.worst_ratio = *std::max_element(ratio.begin(), ratio.end());
  r.worst_alpha_excess = *std::max_element(alpha.begin(), alpha.end());
  r.worst_beta_excess = *std::max_element(beta.begin(), beta.end());
  r.alpha_pass = r.worst_alpha_excess <= margin;
  r.beta_pass = r.worst_beta_excess <= margin;
  r.pass = r.alpha_pass && r.beta_pass && r.worst_ratio <= 1.0 + margin;
  return r;
}

}  // namespace meanfield

#endif  // MEANFIELD_SPOHN_HPP
