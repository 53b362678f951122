#ifndef MEANFIELD_ENSEMBLES_HPP
#define MEANFIELD_ENSEMBLES_HPP

#include <cmath>
#include <cstddef>
#include <cstdint>
#include <random>
#include <string>
#include <vector>

#include "meanfield/core.hpp"
#include "meanfield/density.hpp"
#include "meanfield/dynamics.hpp"
#include "meanfield/hierarchy.hpp"
#include "meanfield/points.hpp"
#include "meanfield/transport.hpp"

namespace meanfield {

// Largest member count accepted by nested_w1.
inline constexpr std::size_t kMaxMembers = 256;

// A law on probability measures, represented by weighted member measures.
struct MeasureEnsemble {
  std::vector<DiscreteMeasure> members;
  std::vector<double> weights;
  std::uint64_t seed = 0;
  double time = 0.0;

  static MeasureEnsemble uniform(std::vector<DiscreteMeasure> members, std::uint64_t seed = 0) {
    MeasureEnsemble e;
    const std::size_t k = members.size();
    e.members = std::move(members);
    e.weights.assign(k, 1.0 / static_cast<double>(k));
    e.seed = seed;
    e.check();
    return e;
  }

  std::size_t size() const noexcept { return members.size(); }
  std::size_t dim() const { return members.front().dim(); }

  void check() const {
    require(!members.empty(), "measure ensemble: no members");
    require(weights.size() == members.size(), "measure ensemble: one weight per member required");
    for (double w : weights) require(std::isfinite(w) && w >= 0.0, "measure ensemble: negative weight");
    require(std::abs(pairwise_sum(weights) - 1.0) <= DiscreteMeasure::kMassTolerance,
            "measure ensemble: weights must sum to 1");
    for (const auto& m : members)
      require(m.dim() == members.front().dim(), "measure ensemble: members must share dimension");
  }
};

// Transport distance between ensembles with ground cost W1 between members.
inline double nested_w1(const MeasureEnsemble& p, const MeasureEnsemble& q) {
  p.check();
  q.check();
  require(p.dim() == q.dim(), "nested_w1: dimension mismatch");
  if (p.size() > kMaxMembers || q.size() > kMaxMembers)
    throw CapacityError("nested_w1: member counts " + std::to_string(p.size()) + " x " +
                        std::to_string(q.size()) + " exceed " + std::to_string(kMaxMembers));
  const std::size_t n = p.size(), m = q.size();
  std::vector<double> cost(n * m);
  parallel_for(n * m, [&](std::size_t ij) {
    cost[ij] = w1(p.members[ij / m], q.members[ij % m]);
  });
  return solve_transport(cost, p.weights, q.weights).cost;
}

// Each member moves as a weighted particle system under the kernel; member
// weights are unchanged.
inline MeasureEnsemble statistical_pushforward(const MeasureEnsemble& p,
                                               const InteractionKernel& kernel,
                                               const FlowParams& params) {
  p.check();
  MeasureEnsemble out = p;
  out.time = p.time + params.t_final;
  parallel_for(p.size(), [&](std::size_t i) {
    try {
      out.members[i] = integrate_measure_flow(kernel, p.members[i], params);
    } catch (const NumericalError& e) {
      throw NumericalError("member " + std::to_string(i), e);
    }
  });
  return out;
}

// Samples of the N-particle law obtained by first drawing a member with its
// weight, then N i.i.d. points from that member. Members are assigned by
// systematic resampling so each gets its weight's share of the draws up to
// one.
inline Ensemble qn_projection(const MeasureEnsemble& p, std::size_t n_particles,
                              std::size_t samples_per_member, std::uint64_t seed) {
  p.check();
  require(n_particles >= 1, "qn_projection: N must be >= 1");
  require(samples_per_member >= 1, "qn_projection: samples per member must be >= 1");
  const std::size_t total = samples_per_member * p.size();

  std::vector<std::size_t> member_of(total);
  {
    Rng rng = make_rng(seed, Stream::kMembers, 0);
    const double u0 = std::uniform_real_distribution<double>(0.0, 1.0)(rng);
    std::size_t c = 0;
    double cum = p.weights[0];
    for (std::size_t i = 0; i < total; ++i) {
      const double target = (static_cast<double>(i) + u0) / static_cast<double>(total);
      while (target > cum && c + 1 < p.size()) cum += p.weights[++c];
      member_of[i] = c;
    }
  }

  Ensemble ens;
  ens.dim = p.dim();
  ens.n_particles = n_particles;
  ens.seed = seed;
  ens.time = p.time;
  ens.samples.resize(total);
  parallel_for(total, [&](std::size_t i) {
    const DiscreteMeasure& f = p.members[member_of[i]];
    Rng rng = make_rng(seed, Stream::kSamples, i);
    std::discrete_distribution<std::size_t> pick(f.weights().begin(), f.weights().end());
    std::vector<double> coords;
    coords.reserve(n_particles * f.dim());
    for (std::size_t k = 0; k < n_particles; ++k) {
      const auto pt = f.point(pick(rng));
      coords.insert(coords.end(), pt.begin(), pt.end());
    }
    ens.samples[i] = ParticleConfiguration(f.dim(), std::move(coords));
  });
  return ens;
}

// The empirical measures of an ensemble's samples, equally weighted.
inline MeasureEnsemble empirical_ensemble(const Ensemble& ens) {
  ens.check();
  std::vector<DiscreteMeasure> members;
  members.reserve(ens.size());
  for (const auto& z : ens.samples) members.push_back(DiscreteMeasure::empirical(z));
  MeasureEnsemble out = MeasureEnsemble::uniform(std::move(members), ens.seed);
  out.time = ens.time;
  return out;
}

// `members` clouds of `points` i.i.d. draws each. Member i samples from the
// base mixture with every component mean shifted by an independent
// N(0, jitter^2) offset per coordinate.
inline MeasureEnsemble random_mixture_ensemble(const DensitySpec& base, std::size_t members,
                                               std::size_t points, double jitter,
                                               std::uint64_t seed) {
  require(!base.is_uniform(), "random_mixture_ensemble: base density must be Gaussian");
  require(members >= 1 && points >= 1, "random_mixture_ensemble: need members, points >= 1");
  require(jitter >= 0.0 && std::isfinite(jitter), "random_mixture_ensemble: jitter must be >= 0");
  std::vector<DiscreteMeasure> out(members);
  parallel_for(members, [&](std::size_t i) {
    Rng rng = make_rng(seed, Stream::kMembers, i + 1);
    std::normal_distribution<double> g(0.0, 1.0);
    auto comps = base.mixture_spec().components;
    for (auto& c : comps)
      for (double& x : c.gaussian.mean) x += jitter * g(rng);
    out[i] = DiscreteMeasure::empirical(sample_points(DensitySpec::mixture(std::move(comps)), points, rng));
  });
  return MeasureEnsemble::uniform(std::move(out), seed);
}

struct NestedStabilityReport {
  double dist0 = 0.0;
  double dist_t = 0.0;
  double bound = 0.0;
  double tol = 0.05;
  bool pass = false;
};

// dist_t is recomputed from scratch on the pushed-forward ensembles.
inline NestedStabilityReport nested_stability_check(const MeasureEnsemble& p0,
                                                    const MeasureEnsemble& q0,
                                                    const InteractionKernel& kernel, double t,
                                                    double dt, double tol = 0.05) {
  require(tol >= 0.0, "nested_stability_check: tol must be >= 0");
  NestedStabilityReport r;
  r.tol = tol;
  r.dist0 = nested_w1(p0, q0);
  const FlowParams params{dt, t, Method::kRK4};
  r.dist_t = nested_w1(statistical_pushforward(p0, kernel, params),
                       statistical_pushforward(q0, kernel, params));
  r.bound = std::exp(2.0 * kernel.lipschitz() * std::abs(t)) * r.dist0;
  r.pass = r.dist_t <= r.bound * (1.0 + tol);
  return r;
}

}  // namespace meanfield

#endif  // MEANFIELD_ENSEMBLES_HPP
