#ifndef MEANFIELD_HIERARCHY_HPP
#define MEANFIELD_HIERARCHY_HPP

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <numeric>
#include <random>
#include <string>
#include <vector>

#include "meanfield/core.hpp"
#include "meanfield/density.hpp"
#include "meanfield/dynamics.hpp"
#include "meanfield/points.hpp"
#include "meanfield/test_functions.hpp"
#include "meanfield/transport.hpp"

namespace meanfield {

// S i.i.d. draws of an N-particle configuration from a symmetric law.
struct Ensemble {
  std::size_t dim = 1;
  std::size_t n_particles = 1;
  std::vector<ParticleConfiguration> samples;
  std::uint64_t seed = 0;
  double time = 0.0;

  std::size_t size() const noexcept { return samples.size(); }

  void check() const {
    require(!samples.empty(), "ensemble: no samples");
    for (const auto& z : samples)
      require(z.dim() == dim && z.count() == n_particles,
              "ensemble: samples must share dimension and particle count");
  }
};

// Exact totals over all maps {1..m} -> {1..N} are used up to this many maps.
inline constexpr double kExactMapLimit = 1e6;
// Injections per sample in the symmetrized marginal estimator.
inline constexpr std::size_t kMaxInjections = 120;
// Random maps per sample when the exact map sum is too large.
inline constexpr std::size_t kSampledMaps = 4096;

inline Ensemble sample_product_ensemble(const DensitySpec& f, std::size_t n_particles,
                                        std::size_t samples, std::uint64_t seed) {
  require(n_particles >= 1, "sample_product_ensemble: N must be >= 1");
  require(samples >= 1, "sample_product_ensemble: S must be >= 1");
  Ensemble ens;
  ens.dim = f.dim();
  ens.n_particles = n_particles;
  ens.seed = seed;
  ens.samples.resize(samples);
  parallel_for(samples, [&](std::size_t s) {
    Rng rng = make_rng(seed, Stream::kSamples, s);
    ens.samples[s] = sample_points(f, n_particles, rng);
  });
  return ens;
}

inline Ensemble propagate_ensemble(const Ensemble& ens, const InteractionKernel& kernel,
                                   const FlowParams& params) {
  ens.check();
  require(ens.dim == static_cast<std::size_t>(kernel.dim()),
          "propagate_ensemble: ensemble dimension does not match kernel");
  Ensemble out = ens;
  out.time = ens.time + params.t_final;
  parallel_for(ens.size(), [&](std::size_t s) {
    try {
      out.samples[s] = integrate_flow(kernel, ens.samples[s], params);
    } catch (const NumericalError& e) {
      throw NumericalError("sample " + std::to_string(s), e);
    }
  });
  return out;
}

// (prefactor, defect_bound) = (N! / ((N - m)! N^m), m (m - 1) / (2N)).
struct CombinatorialPrefactor {
  double prefactor = 1.0;
  double defect_bound = 0.0;
};

inline CombinatorialPrefactor combinatorial_prefactor(std::size_t n, std::size_t m) {
  require(m >= 1 && m <= n, "combinatorial_prefactor: need 1 <= m <= N (got m=" +
                                std::to_string(m) + ", N=" + std::to_string(n) + ")");
  double log_pf = 0.0;
  const double nd = static_cast<double>(n);
  for (std::size_t i = 1; i < m; ++i) log_pf += std::log1p(-static_cast<double>(i) / nd);
  const double md = static_cast<double>(m);
  return {std::exp(log_pf), md * (md - 1.0) / (2.0 * nd)};
}

namespace detail {

inline void check_arity(const Ensemble& ens, const TestFunctionM& phi, const char* where) {
  ens.check();
  require(phi.dim() == ens.dim, std::string(where) + ": test function dimension mismatch");
  require(static_cast<std::size_t>(phi.arity()) <= ens.n_particles,
          std::string(where) + ": arity m=" + std::to_string(phi.arity()) +
              " exceeds particle count N=" + std::to_string(ens.n_particles));
}

inline double count_maps(std::size_t n, std::size_t m) {
  return std::pow(static_cast<double>(n), static_cast<double>(m));
}

// phi evaluated at (z_{j(1)}, ..., z_{j(m)}).
inline double eval_at(const TestFunctionM& phi, const ParticleConfiguration& z,
                      std::span<const std::size_t> idx, std::vector<double>& buf) {
  const std::size_t d = z.dim();
  for (std::size_t a = 0; a < idx.size(); ++a)
    std::copy_n(z.point(idx[a]).data(), d, buf.data() + a * d);
  return phi(buf);
}

inline bool injective(std::span<const std::size_t> idx) {
  for (std::size_t a = 0; a < idx.size(); ++a)
    for (std::size_t b = a + 1; b < idx.size(); ++b)
      if (idx[a] == idx[b]) return false;
  return true;
}

// Calls fn(idx) for every map {1..m} -> {1..n} in lexicographic order.
template <class Fn>
void for_each_map(std::size_t n, std::size_t m, Fn&& fn) {
  std::vector<std::size_t> idx(m, 0);
  while (true) {
    fn(std::span<const std::size_t>(idx));
    std::size_t s = m;
    while (s > 0) {
      --s;
      if (++idx[s] < n) break;
      idx[s] = 0;
      if (s == 0) return;
    }
  }
}

// The injections used by the marginal estimator: all of them when there are
// at most kMaxInjections, otherwise the identity followed by a fixed seeded set.
inline std::vector<std::size_t> injection_set(std::size_t n, std::size_t m, std::uint64_t seed) {
  double total = 1.0;
  for (std::size_t i = 0; i < m; ++i) total *= static_cast<double>(n - i);
  std::vector<std::size_t> flat;
  if (total <= static_cast<double>(kMaxInjections)) {
    for_each_map(n, m, [&](std::span<const std::size_t> idx) {
      if (injective(idx)) flat.insert(flat.end(), idx.begin(), idx.end());
    });
    return flat;
  }
  for (std::size_t a = 0; a < m; ++a) flat.push_back(a);
  Rng rng = make_rng(seed, Stream::kInjections, 0);
  std::vector<std::size_t> pool(n);
  while (flat.size() < kMaxInjections * m) {
    std::iota(pool.begin(), pool.end(), std::size_t{0});
    // Partial Fisher-Yates for the first m slots.
    for (std::size_t a = 0; a < m; ++a) {
      std::uniform_int_distribution<std::size_t> pick(a, n - 1);
      std::swap(pool[a], pool[pick(rng)]);
    }
    flat.insert(flat.end(), pool.begin(), pool.begin() + static_cast<std::ptrdiff_t>(m));
  }
  return flat;
}

template <class PerSample>
MeanAndError reduce_samples(const Ensemble& ens, PerSample&& per_sample) {
  std::vector<double> values(ens.size());
  parallel_for(ens.size(), [&](std::size_t s) { values[s] = per_sample(s); });
  return mean_and_stderr(values);
}

}  // namespace detail

// <P_{N:m}, phi>: mean over samples of the injection-averaged phi.
inline MeanAndError marginal_pair(const Ensemble& ens, const TestFunctionM& phi) {
  detail::check_arity(ens, phi, "marginal_pair");
  const std::size_t m = static_cast<std::size_t>(phi.arity());
  const std::vector<std::size_t> inj = detail::injection_set(ens.n_particles, m, ens.seed);
  const std::size_t count = inj.size() / m;
  return detail::reduce_samples(ens, [&](std::size_t s) {
    std::vector<double> buf(m * ens.dim), terms(count);
    for (std::size_t a = 0; a < count; ++a)
      terms[a] = detail::eval_at(phi, ens.samples[s], {inj.data() + a * m, m}, buf);
    return pairwise_sum(terms) / static_cast<double>(count);
  });
}

// <E[mu_Z^{(x)m}], phi>: mean over samples of N^{-m} sum over all maps.
// Exact per sample when N^m <= kExactMapLimit; otherwise a uniform sample of
// kSampledMaps maps per sample.
inline MeanAndError tensorized_empirical_pair(const Ensemble& ens, const TestFunctionM& phi) {
  detail::check_arity(ens, phi, "tensorized_empirical_pair");
  const std::size_t n = ens.n_particles, m = static_cast<std::size_t>(phi.arity());
  const bool exact = detail::count_maps(n, m) <= kExactMapLimit;
  return detail::reduce_samples(ens, [&](std::size_t s) {
    std::vector<double> buf(m * ens.dim), terms;
    if (exact) {
      terms.reserve(static_cast<std::size_t>(detail::count_maps(n, m)));
      detail::for_each_map(n, m, [&](std::span<const std::size_t> idx) {
        terms.push_back(detail::eval_at(phi, ens.samples[s], idx, buf));
      });
    } else {
      Rng rng = make_rng(ens.seed, Stream::kSubsample, s);
      std::uniform_int_distribution<std::size_t> pick(0, n - 1);
      std::vector<std::size_t> idx(m);
      terms.resize(kSampledMaps);
      for (double& t : terms) {
        for (auto& i : idx) i = pick(rng);
        t = detail::eval_at(phi, ens.samples[s], idx, buf);
      }
    }
    return pairwise_sum(terms) / static_cast<double>(terms.size());
  });
}

// <R_{N,m}, phi>: N^{-m} times the sum over non-injective maps. Exact when
// N^m <= kExactMapLimit; otherwise (1 - prefactor) times the mean of phi over
// non-injective maps drawn uniformly by rejection.
inline MeanAndError defect_term(const Ensemble& ens, const TestFunctionM& phi) {
  detail::check_arity(ens, phi, "defect_term");
  const std::size_t n = ens.n_particles, m = static_cast<std::size_t>(phi.arity());
  if (m == 1) return {0.0, 0.0};
  const bool exact = detail::count_maps(n, m) <= kExactMapLimit;
  const double scale = 1.0 - combinatorial_prefactor(n, m).prefactor;
  return detail::reduce_samples(ens, [&](std::size_t s) {
    std::vector<double> buf(m * ens.dim), terms;
    if (exact) {
      detail::for_each_map(n, m, [&](std::span<const std::size_t> idx) {
        if (!detail::injective(idx)) terms.push_back(detail::eval_at(phi, ens.samples[s], idx, buf));
      });
      return pairwise_sum(terms) / detail::count_maps(n, m);
    }
    Rng rng = make_rng(ens.seed, Stream::kDefect, s);
    std::uniform_int_distribution<std::size_t> pick(0, n - 1);
    std::vector<std::size_t> idx(m);
    constexpr std::size_t kAccepted = 64;
    while (terms.size() < kAccepted) {
      for (auto& i : idx) i = pick(rng);
      if (!detail::injective(idx)) terms.push_back(detail::eval_at(phi, ens.samples[s], idx, buf));
    }
    return scale * pairwise_sum(terms) / static_cast<double>(kAccepted);
  });
}

// Pooled single-particle cloud of all N * S coordinates.
inline DiscreteMeasure pooled_cloud(const Ensemble& ens) {
  ens.check();
  std::vector<double> coords;
  coords.reserve(ens.size() * ens.n_particles * ens.dim);
  for (const auto& z : ens.samples) coords.insert(coords.end(), z.coords().begin(), z.coords().end());
  const std::size_t count = coords.size() / ens.dim;
  return DiscreteMeasure(ens.dim, std::move(coords),
                         std::vector<double>(count, 1.0 / static_cast<double>(count)));
}

namespace detail {

inline DiscreteMeasure subsample_uniform(const DiscreteMeasure& mu, std::size_t cap,
                                         std::uint64_t seed) {
  if (mu.size() <= cap) return mu;
  std::vector<std::size_t> idx(mu.size());
  std::iota(idx.begin(), idx.end(), std::size_t{0});
  Rng rng = make_rng(seed, Stream::kSubsample, mu.size());
  for (std::size_t a = 0; a < cap; ++a) {
    std::uniform_int_distribution<std::size_t> pick(a, idx.size() - 1);
    std::swap(idx[a], idx[pick(rng)]);
  }
  std::sort(idx.begin(), idx.begin() + static_cast<std::ptrdiff_t>(cap));
  std::vector<double> coords, weights;
  for (std::size_t a = 0; a < cap; ++a) {
    coords.insert(coords.end(), mu.point(idx[a]).begin(), mu.point(idx[a]).end());
    weights.push_back(mu.weight(idx[a]));
  }
  return DiscreteMeasure(mu.dim(), std::move(coords), normalized(std::move(weights)));
}

}  // namespace detail

// W1 between the pooled single-particle cloud and a reference measure. In
// d = 1 the distance is exact on the full pool; otherwise both sides are
// subsampled (seeded, without replacement) to fit the transport capacity.
inline double chaoticity_distance(const Ensemble& ens, const DiscreteMeasure& reference,
                                  std::uint64_t seed = 0) {
  const DiscreteMeasure pool = pooled_cloud(ens);
  require(pool.dim() == reference.dim(), "chaoticity_distance: dimension mismatch");
  if (pool.dim() == 1) return w1_sorted_1d(pool, reference);
  const auto side = static_cast<std::size_t>(std::sqrt(static_cast<double>(kTransportCapacity)));
  return w1(detail::subsample_uniform(pool, side, seed),
            detail::subsample_uniform(reference, side, seed + 1));
}

// Mean and standard error of the chaoticity distance over `batches` disjoint
// sample batches; each batch distance is biased upward by its smaller pool.
inline MeanAndError chaoticity_batches(const Ensemble& ens, const DiscreteMeasure& reference,
                                       std::size_t batches, std::uint64_t seed = 0) {
  ens.check();
  require(batches >= 2 && batches <= ens.size(), "chaoticity_batches: need 2 <= batches <= S");
  std::vector<double> values(batches);
  parallel_for(batches, [&](std::size_t b) {
    Ensemble part;
    part.dim = ens.dim;
    part.n_particles = ens.n_particles;
    for (std::size_t s = b; s < ens.size(); s += batches) part.samples.push_back(ens.samples[s]);
    values[b] = chaoticity_distance(part, reference, seed + b);
  });
  return mean_and_stderr(values);
}

}  // namespace meanfield

#endif  // MEANFIELD_HIERARCHY_HPP
