#ifndef MEANFIELD_TRANSPORT_HPP
#define MEANFIELD_TRANSPORT_HPP

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <numeric>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "meanfield/assignment.hpp"
#include "meanfield/core.hpp"
#include "meanfield/network_simplex.hpp"
#include "meanfield/points.hpp"

namespace meanfield {

// Largest n * m handled by the exact solvers.
inline constexpr std::size_t kTransportCapacity = 4'000'000;
// Largest support produced by tensor_power.
inline constexpr std::size_t kTensorCapacity = 100'000;

struct TransportPlan {
  std::vector<PlanEntry> entries;
  double cost = 0.0;
};

struct W1Result {
  double distance = 0.0;
  TransportPlan plan;
};

// Optimal transport for a dense cost matrix between weight vectors `a` (rows)
// and `b` (columns). Equal-size uniform weights go to the assignment solver,
// everything else to the network simplex. Zero-weight atoms are dropped.
inline TransportPlan solve_transport(std::span<const double> cost, std::span<const double> a,
                                     std::span<const double> b) {
  const std::size_t n = a.size(), m = b.size();
  require(cost.size() == n * m, "solve_transport: cost matrix shape mismatch");
  require(n >= 1 && m >= 1, "solve_transport: empty marginal");
  if (n * m > kTransportCapacity)
    throw CapacityError("solve_transport: problem size " + std::to_string(n) + " x " +
                        std::to_string(m) + " exceeds capacity " +
                        std::to_string(kTransportCapacity));
  const double ta = pairwise_sum(a), tb = pairwise_sum(b);
  require(std::abs(ta - tb) <= 1e-9, "solve_transport: unequal total mass " +
                                         std::to_string(ta) + " vs " + std::to_string(tb));

  auto uniform = [](std::span<const double> w) {
    const double u = 1.0 / static_cast<double>(w.size());
    return std::all_of(w.begin(), w.end(),
                       [&](double x) { return std::abs(x - u) <= DiscreteMeasure::kMassTolerance; });
  };

  TransportPlan plan;
  if (n == m && uniform(a) && uniform(b)) {
    const AssignmentResult res = solve_assignment(cost, n);
    const double mass = 1.0 / static_cast<double>(n);
    for (std::size_t i = 0; i < n; ++i) plan.entries.push_back({i, res.column_of_row[i], mass});
    plan.cost = res.total_cost * mass;
    return plan;
  }

  std::vector<std::size_t> rows, cols;
  for (std::size_t i = 0; i < n; ++i)
    if (a[i] > 0.0) rows.push_back(i);
  for (std::size_t j = 0; j < m; ++j)
    if (b[j] > 0.0) cols.push_back(j);
  std::vector<double> sub(rows.size() * cols.size());
  std::vector<double> sa(rows.size()), sb(cols.size());
  for (std::size_t r = 0; r < rows.size(); ++r) {
    sa[r] = a[rows[r]];
    for (std::size_t c = 0; c < cols.size(); ++c) sub[r * cols.size() + c] = cost[rows[r] * m + cols[c]];
  }
  for (std::size_t c = 0; c < cols.size(); ++c) sb[c] = b[cols[c]];
  // Balance the demand side exactly against the supply side.
  const double sa_total = pairwise_sum(sa), sb_total = pairwise_sum(sb);
  for (double& x : sb) x *= sa_total / sb_total;

  const TransportSolution sol = solve_transportation(sub, sa, sb);
  for (const PlanEntry& e : sol.entries)
    plan.entries.push_back({rows[e.source], cols[e.target], e.mass});
  plan.cost = sol.cost;
  return plan;
}

inline std::vector<double> cost_matrix(const DiscreteMeasure& mu, const DiscreteMeasure& nu) {
  std::vector<double> c(mu.size() * nu.size());
  for (std::size_t i = 0; i < mu.size(); ++i)
    for (std::size_t j = 0; j < nu.size(); ++j) c[i * nu.size() + j] = distance(mu.point(i), nu.point(j));
  return c;
}

// Exact Monge-Kantorovich-1 distance with an optimal plan.
inline W1Result w1_exact(const DiscreteMeasure& mu, const DiscreteMeasure& nu) {
  require(mu.dim() == nu.dim(), "w1_exact: dimension mismatch (" + std::to_string(mu.dim()) +
                                    " vs " + std::to_string(nu.dim()) + ")");
  if (mu.size() * nu.size() > kTransportCapacity)
    throw CapacityError("w1_exact: supports " + std::to_string(mu.size()) + " x " +
                        std::to_string(nu.size()) + " exceed capacity");
  const std::vector<double> cost = cost_matrix(mu, nu);
  W1Result r;
  r.plan = solve_transport(cost, mu.weights(), nu.weights());
  r.distance = r.plan.cost;
  return r;
}

inline double w1(const DiscreteMeasure& mu, const DiscreteMeasure& nu) {
  return w1_exact(mu, nu).distance;
}

// Exact 1-D distance as the integral of |F_mu - F_nu| (equivalently the L1
// distance of the quantile functions).
inline double w1_sorted_1d(const DiscreteMeasure& mu, const DiscreteMeasure& nu) {
  require(mu.dim() == 1 && nu.dim() == 1, "w1_sorted_1d: measures must be one-dimensional");
  struct Atom {
    double x;
    double signed_mass;
  };
  std::vector<Atom> atoms;
  atoms.reserve(mu.size() + nu.size());
  for (std::size_t i = 0; i < mu.size(); ++i) atoms.push_back({mu.point(i)[0], mu.weight(i)});
  for (std::size_t j = 0; j < nu.size(); ++j) atoms.push_back({nu.point(j)[0], -nu.weight(j)});
  std::stable_sort(atoms.begin(), atoms.end(), [](const Atom& p, const Atom& q) { return p.x < q.x; });
  std::vector<double> terms;
  terms.reserve(atoms.size());
  double cdf_gap = 0.0;
  for (std::size_t k = 0; k + 1 < atoms.size(); ++k) {
    cdf_gap += atoms[k].signed_mass;
    terms.push_back(std::abs(cdf_gap) * (atoms[k + 1].x - atoms[k].x));
  }
  return pairwise_sum(terms);
}

// phi(z) = min_i (offset_i + |z - anchor_i|); 1-Lipschitz by construction.
struct LipschitzTestFunction {
  std::size_t dim = 1;
  std::vector<double> anchors;  // flat, count x dim
  std::vector<double> offsets;

  double operator()(std::span<const double> z) const {
    double best = std::numeric_limits<double>::infinity();
    for (std::size_t i = 0; i < offsets.size(); ++i)
      best = std::min(best, offsets[i] + distance(z, {anchors.data() + i * dim, dim}));
    return best;
  }

  double integrate(const DiscreteMeasure& mu) const {
    std::vector<double> terms(mu.size());
    for (std::size_t i = 0; i < mu.size(); ++i) terms[i] = mu.weight(i) * (*this)(mu.point(i));
    return pairwise_sum(terms);
  }
};

// Lower bound on W1 from the dual side: the best |<mu - nu, phi>| over
// 1-Lipschitz cones. Single cones at every support point are always tried;
// `trials` further functions use random anchor subsets and offsets.
inline double w1_dual_lb(const DiscreteMeasure& mu, const DiscreteMeasure& nu, int trials,
                         std::uint64_t seed) {
  require(trials >= 1, "w1_dual_lb: trials must be >= 1");
  require(mu.dim() == nu.dim(), "w1_dual_lb: dimension mismatch");
  const std::size_t d = mu.dim();
  std::vector<double> pool = mu.coords();
  pool.insert(pool.end(), nu.coords().begin(), nu.coords().end());
  const std::size_t pool_size = pool.size() / d;

  double spread = 0.0;
  for (std::size_t i = 0; i < pool_size; ++i)
    spread = std::max(spread, distance({pool.data() + i * d, d}, {pool.data(), d}));

  double best = 0.0;
  auto consider = [&](const LipschitzTestFunction& phi) {
    best = std::max(best, std::abs(phi.integrate(mu) - phi.integrate(nu)));
  };
  for (std::size_t i = 0; i < pool_size; ++i)
    consider({d, std::vector<double>(pool.begin() + i * d, pool.begin() + (i + 1) * d), {0.0}});

  Rng rng = make_rng(seed, Stream::kTestFunctions, 0);
  std::uniform_int_distribution<std::size_t> pick(0, pool_size - 1);
  std::uniform_int_distribution<int> how_many(1, 4);
  std::uniform_real_distribution<double> offset(0.0, std::max(spread, 1e-300));
  for (int t = 0; t < trials; ++t) {
    LipschitzTestFunction phi{d, {}, {}};
    const int k = how_many(rng);
    for (int a = 0; a < k; ++a) {
      const std::size_t idx = pick(rng);
      phi.anchors.insert(phi.anchors.end(), pool.begin() + idx * d, pool.begin() + (idx + 1) * d);
      phi.offsets.push_back(a == 0 ? 0.0 : offset(rng));
    }
    consider(phi);
  }
  return best;
}

// mu^{(x)m} on R^{dm}; atoms enumerated in lexicographic index order.
inline DiscreteMeasure tensor_power(const DiscreteMeasure& mu, int m) {
  require(m >= 1, "tensor_power: m must be >= 1");
  const std::size_t n = mu.size(), d = mu.dim();
  double atoms = 1.0;
  for (int i = 0; i < m; ++i) atoms *= static_cast<double>(n);
  if (atoms > static_cast<double>(kTensorCapacity))
    throw CapacityError("tensor_power: " + std::to_string(n) + "^" + std::to_string(m) +
                        " atoms exceed capacity");
  const std::size_t count = static_cast<std::size_t>(atoms);
  const std::size_t md = static_cast<std::size_t>(m);
  std::vector<double> coords(count * d * md), weights(count);
  std::vector<std::size_t> idx(md, 0);
  for (std::size_t a = 0; a < count; ++a) {
    double w = 1.0;
    for (std::size_t s = 0; s < md; ++s) {
      w *= mu.weight(idx[s]);
      std::copy_n(mu.point(idx[s]).data(), d, coords.data() + (a * md + s) * d);
    }
    weights[a] = w;
    for (std::size_t s = md; s-- > 0;) {
      if (++idx[s] < n) break;
      idx[s] = 0;
    }
  }
  return DiscreteMeasure(d * md, std::move(coords), normalized(std::move(weights)));
}

// lambda (x) mu on R^{d1 + d2}.
inline DiscreteMeasure product_measure(const DiscreteMeasure& lambda, const DiscreteMeasure& mu) {
  const std::size_t d1 = lambda.dim(), d2 = mu.dim();
  if (lambda.size() * mu.size() > kTensorCapacity)
    throw CapacityError("product_measure: support too large");
  std::vector<double> coords, weights;
  coords.reserve(lambda.size() * mu.size() * (d1 + d2));
  for (std::size_t i = 0; i < lambda.size(); ++i) {
    for (std::size_t j = 0; j < mu.size(); ++j) {
      coords.insert(coords.end(), lambda.point(i).begin(), lambda.point(i).end());
      coords.insert(coords.end(), mu.point(j).begin(), mu.point(j).end());
      weights.push_back(lambda.weight(i) * mu.weight(j));
    }
  }
  return DiscreteMeasure(d1 + d2, std::move(coords), normalized(std::move(weights)));
}

// (1 - theta) mu + theta nu, supports concatenated.
inline DiscreteMeasure mixture(const DiscreteMeasure& mu, const DiscreteMeasure& nu, double theta) {
  require(mu.dim() == nu.dim(), "mixture: dimension mismatch");
  require(theta >= 0.0 && theta <= 1.0, "mixture: theta must lie in [0, 1]");
  std::vector<double> coords = mu.coords();
  coords.insert(coords.end(), nu.coords().begin(), nu.coords().end());
  std::vector<double> weights;
  for (double w : mu.weights()) weights.push_back((1.0 - theta) * w);
  for (double w : nu.weights()) weights.push_back(theta * w);
  return DiscreteMeasure(mu.dim(), std::move(coords), normalized(std::move(weights)));
}

// Minimum over all n! matchings; valid because some optimal plan between
// equal-size uniform measures is a permutation.
inline double w1_brute_force(const DiscreteMeasure& mu, const DiscreteMeasure& nu) {
  require(mu.dim() == nu.dim(), "w1_brute_force: dimension mismatch");
  require(mu.size() == nu.size(), "w1_brute_force: supports must have equal size");
  require(mu.size() <= 7, "w1_brute_force: support size must be <= 7");
  require(mu.is_uniform() && nu.is_uniform(), "w1_brute_force: measures must be uniform");
  const std::size_t n = mu.size();
  const std::vector<double> cost = cost_matrix(mu, nu);
  std::vector<std::size_t> perm(n);
  std::iota(perm.begin(), perm.end(), std::size_t{0});
  double best = std::numeric_limits<double>::infinity();
  std::vector<double> terms(n);
  do {
    for (std::size_t i = 0; i < n; ++i) terms[i] = cost[i * n + perm[i]];
    best = std::min(best, pairwise_sum(terms));
  } while (std::next_permutation(perm.begin(), perm.end()));
  return best / static_cast<double>(n);
}

}  // namespace meanfield

#endif  // MEANFIELD_TRANSPORT_HPP
