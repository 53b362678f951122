#ifndef MEANFIELD_DYNAMICS_HPP
#define MEANFIELD_DYNAMICS_HPP

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <numeric>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "meanfield/core.hpp"
#include "meanfield/kernels.hpp"
#include "meanfield/points.hpp"

namespace meanfield {

enum class Method { kRK4 };

struct FlowParams {
  double dt = 1e-3;
  double t_final = 0.0;
  Method method = Method::kRK4;
};

// min(1e-3, 0.05 / max(L, 1)).
inline double default_dt(const InteractionKernel& kernel) {
  return std::min(1e-3, 0.05 / std::max(kernel.lipschitz(), 1.0));
}

inline FlowParams default_params(const InteractionKernel& kernel, double t_final) {
  return FlowParams{default_dt(kernel), t_final, Method::kRK4};
}

struct TrajectoryFrame {
  double t = 0.0;
  ParticleConfiguration state;
};

using Trajectory = std::vector<TrajectoryFrame>;

namespace detail {

// Evaluates the N-body vector field (1/N) sum_l K(z_k, z_l), or the weighted
// field sum_l w_l K(z_k, z_l) when weights are supplied.
//
// Source points are visited in lexicographic order of their coordinates, so
// relabelling the particles permutes the output and changes nothing else,
// bit for bit.
class VectorField {
 public:
  VectorField(const InteractionKernel& kernel, std::size_t count,
              std::span<const double> weights = {})
      : kernel_(kernel),
        dim_(static_cast<std::size_t>(kernel.dim())),
        count_(count),
        weights_(weights.begin(), weights.end()),
        affine_(kernel.affine_matrix()),
        order_(count),
        term_(dim_) {}

  void operator()(std::span<const double> z, std::span<double> out) {
    const std::size_t d = dim_;
    const std::size_t n = count_;
    std::iota(order_.begin(), order_.end(), std::size_t{0});
    std::sort(order_.begin(), order_.end(), [&](std::size_t a, std::size_t b) {
      std::span<const double> pa(z.data() + a * d, d), pb(z.data() + b * d, d);
      if (lex_less(pa, pb)) return true;
      if (lex_less(pb, pa)) return false;
      return !weights_.empty() && weights_[a] < weights_[b];
    });
    const double inv_n = 1.0 / static_cast<double>(n);

    if (affine_) {
      const std::vector<double>& a = *affine_;
      std::vector<double> center(d, 0.0);
      for (std::size_t l : order_) {
        const double w = weights_.empty() ? 1.0 : weights_[l];
        for (std::size_t c = 0; c < d; ++c) center[c] += w * z[l * d + c];
      }
      if (weights_.empty())
        for (double& c : center) c *= inv_n;
      for (std::size_t k = 0; k < n; ++k) {
        for (std::size_t r = 0; r < d; ++r) {
          double s = 0.0;
          for (std::size_t c = 0; c < d; ++c) s += a[r * d + c] * (z[k * d + c] - center[c]);
          out[k * d + r] = s;
        }
      }
      return;
    }

    for (std::size_t k = 0; k < n; ++k) {
      std::span<const double> zk(z.data() + k * d, d);
      std::span<double> ok(out.data() + k * d, d);
      std::fill(ok.begin(), ok.end(), 0.0);
      for (std::size_t l : order_) {
        kernel_.eval_into(zk, std::span<const double>(z.data() + l * d, d), term_);
        const double w = weights_.empty() ? 1.0 : weights_[l];
        for (std::size_t c = 0; c < d; ++c) ok[c] += w * term_[c];
      }
      if (weights_.empty())
        for (double& o : ok) o *= inv_n;
    }
  }

 private:
  const InteractionKernel& kernel_;
  std::size_t dim_;
  std::size_t count_;
  std::vector<double> weights_;
  std::optional<std::vector<double>> affine_;
  std::vector<std::size_t> order_;
  std::vector<double> term_;
};

inline void check_dims(const InteractionKernel& kernel, std::size_t dim, const char* where) {
  require(dim == static_cast<std::size_t>(kernel.dim()),
          std::string(where) + ": state dimension " + std::to_string(dim) +
              " does not match kernel dimension " + std::to_string(kernel.dim()));
}

// Fixed-step classical RK4 on the flat state `y`, in place. The last step is
// shortened when dt does not divide |t_final|; negative t_final runs backward.
inline void rk4_integrate(VectorField& field, std::vector<double>& y, const FlowParams& params,
                          std::size_t dim, Trajectory* trajectory, long save_every) {
  require(params.dt > 0.0 && std::isfinite(params.dt), "integrate_flow: dt must be > 0");
  require(std::isfinite(params.t_final), "integrate_flow: t_final must be finite");
  const double span = std::abs(params.t_final);
  const double sign = params.t_final < 0.0 ? -1.0 : 1.0;
  long full_steps = static_cast<long>(std::floor(span / params.dt));
  double remainder = span - static_cast<double>(full_steps) * params.dt;
  if (remainder <= 1e-12 * std::max(span, 1.0)) {
    remainder = 0.0;
  } else if (params.dt - remainder <= 1e-12 * std::max(span, 1.0)) {
    ++full_steps;
    remainder = 0.0;
  }
  const long total_steps = full_steps + (remainder > 0.0 ? 1 : 0);

  const std::size_t m = y.size();
  std::vector<double> k1(m), k2(m), k3(m), k4(m), tmp(m);
  double t = 0.0;
  if (trajectory) trajectory->push_back({0.0, ParticleConfiguration(dim, y)});
  for (long step = 0; step < total_steps; ++step) {
    const double h = sign * (step < full_steps ? params.dt : remainder);
    field(y, k1);
    for (std::size_t i = 0; i < m; ++i) tmp[i] = y[i] + 0.5 * h * k1[i];
    field(tmp, k2);
    for (std::size_t i = 0; i < m; ++i) tmp[i] = y[i] + 0.5 * h * k2[i];
    field(tmp, k3);
    for (std::size_t i = 0; i < m; ++i) tmp[i] = y[i] + h * k3[i];
    field(tmp, k4);
    for (std::size_t i = 0; i < m; ++i)
      y[i] += h / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]);
    for (double v : y)
      if (!std::isfinite(v)) throw NumericalError("integrate_flow: non-finite state", step);
    t = step < full_steps ? sign * params.dt * static_cast<double>(step + 1) : params.t_final;
    if (trajectory && save_every > 0 &&
        ((step + 1) % save_every == 0 || step + 1 == total_steps)) {
      trajectory->push_back({t, ParticleConfiguration(dim, y)});
    }
  }
}

}  // namespace detail

// Velocities of the N-body system, flat N x d.
inline std::vector<double> nbody_rhs(const InteractionKernel& kernel,
                                     const ParticleConfiguration& state) {
  detail::check_dims(kernel, state.dim(), "nbody_rhs");
  detail::VectorField field(kernel, state.count());
  std::vector<double> out(state.coords().size());
  field(state.coords(), out);
  return out;
}

// State of the N-body flow at params.t_final. When `trajectory` is given it
// receives t = 0, every `save_every`-th step, and the final state.
inline ParticleConfiguration integrate_flow(const InteractionKernel& kernel,
                                            const ParticleConfiguration& initial,
                                            const FlowParams& params,
                                            Trajectory* trajectory = nullptr,
                                            long save_every = 1) {
  detail::check_dims(kernel, initial.dim(), "integrate_flow");
  detail::VectorField field(kernel, initial.count());
  std::vector<double> y = initial.coords();
  detail::rk4_integrate(field, y, params, initial.dim(), trajectory, save_every);
  return ParticleConfiguration(initial.dim(), std::move(y));
}

// Evolves a weighted point cloud as the measure-valued solution of the
// mean-field equation: each atom moves with the force of the whole measure.
// Uniform clouds take exactly the N-body path.
inline DiscreteMeasure integrate_measure_flow(const InteractionKernel& kernel,
                                              const DiscreteMeasure& mu,
                                              const FlowParams& params) {
  detail::check_dims(kernel, mu.dim(), "integrate_measure_flow");
  if (mu.is_uniform()) return mu.with_points(integrate_flow(kernel, mu.support(), params).coords());
  detail::VectorField field(kernel, mu.size(), mu.weights());
  std::vector<double> y = mu.coords();
  detail::rk4_integrate(field, y, params, mu.dim(), nullptr, 0);
  return mu.with_points(std::move(y));
}

// (1/2) sum_k |xi_k|^2 + (1/(2N)) sum_{k,l} V(x_k - x_l). Conserved by the
// N-body flow of a Vlasov kernel.
inline double energy(const InteractionKernel& kernel, const ParticleConfiguration& state) {
  if (!kernel.is_vlasov())
    throw UnsupportedKernelError("energy: kernel '" + kernel.name() + "' is not of Vlasov type");
  detail::check_dims(kernel, state.dim(), "energy");
  const std::size_t d = state.dim();
  const std::size_t s = d / 2;
  const std::size_t n = state.count();
  std::vector<double> kinetic(n);
  for (std::size_t k = 0; k < n; ++k) {
    auto z = state.point(k);
    double v = 0.0;
    for (std::size_t i = 0; i < s; ++i) v += z[s + i] * z[s + i];
    kinetic[k] = 0.5 * v;
  }
  std::vector<double> pair(n * n);
  std::vector<double> dx(s);
  for (std::size_t k = 0; k < n; ++k) {
    for (std::size_t l = 0; l < n; ++l) {
      for (std::size_t i = 0; i < s; ++i) dx[i] = state.point(k)[i] - state.point(l)[i];
      pair[k * n + l] = kernel.potential(dx);
    }
  }
  return pairwise_sum(kinetic) + pairwise_sum(pair) / (2.0 * static_cast<double>(n));
}

// Jacobian of the time-t flow map, (n d) x (n d), assembled column by column
// from central differences. Block (l, k) is the d x d matrix dz_l(t)/dz_k(0).
class FlowJacobian {
 public:
  FlowJacobian(std::size_t count, std::size_t dim)
      : count_(count), dim_(dim), data_(count * dim * count * dim, 0.0) {}

  std::size_t count() const noexcept { return count_; }
  std::size_t dim() const noexcept { return dim_; }
  std::size_t size() const noexcept { return count_ * dim_; }

  double& at(std::size_t row, std::size_t col) { return data_[row * size() + col]; }
  double at(std::size_t row, std::size_t col) const { return data_[row * size() + col]; }

  Eigen::MatrixXd block(std::size_t l, std::size_t k) const {
    Eigen::MatrixXd b(dim_, dim_);
    for (std::size_t r = 0; r < dim_; ++r)
      for (std::size_t c = 0; c < dim_; ++c) b(r, c) = at(l * dim_ + r, k * dim_ + c);
    return b;
  }

  // Spectral norm of block (l, k).
  double block_norm(std::size_t l, std::size_t k) const {
    const Eigen::MatrixXd b = block(l, k);
    if (dim_ == 1) return std::abs(b(0, 0));
    Eigen::JacobiSVD<Eigen::MatrixXd> svd(b);
    return svd.singularValues()(0);
  }

  // Gradient of psi = phi o T_t: returns sum_l a_lk^T grad_l phi(T_t Z) for every
  // k, given the gradient of phi at the image point (only the first
  // grad.size()/d particles need nonzero entries).
  std::vector<double> pull_back(std::span<const double> grad_at_image) const {
    std::vector<double> out(size(), 0.0);
    const std::size_t rows = std::min(grad_at_image.size(), size());
    for (std::size_t col = 0; col < size(); ++col) {
      double s = 0.0;
      for (std::size_t row = 0; row < rows; ++row) s += at(row, col) * grad_at_image[row];
      out[col] = s;
    }
    return out;
  }

 private:
  std::size_t count_;
  std::size_t dim_;
  std::vector<double> data_;
};

// Central-difference Jacobian of T_t at `initial`. The step for particle k is
// h_rel * (1 + |z_k|); each column costs two flow integrations.
inline FlowJacobian flow_jacobian_fd(const InteractionKernel& kernel,
                                     const ParticleConfiguration& initial, double t,
                                     double h_rel = 1e-5,
                                     std::optional<double> dt = std::nullopt) {
  require(h_rel > 0.0, "flow_jacobian_fd: step must be > 0");
  detail::check_dims(kernel, initial.dim(), "flow_jacobian_fd");
  const std::size_t n = initial.count();
  const std::size_t d = initial.dim();
  const FlowParams params{dt.value_or(default_dt(kernel)), t, Method::kRK4};
  FlowJacobian jac(n, d);
  std::vector<ParticleConfiguration> plus(n * d), minus(n * d);
  std::vector<double> steps(n * d);
  parallel_for(n * d, [&](std::size_t col) {
    const std::size_t k = col / d;
    const double h = h_rel * (1.0 + norm(initial.point(k)));
    steps[col] = h;
    ParticleConfiguration zp = initial, zm = initial;
    zp.coords()[col] += h;
    zm.coords()[col] -= h;
    plus[col] = integrate_flow(kernel, zp, params);
    minus[col] = integrate_flow(kernel, zm, params);
  });
  for (std::size_t col = 0; col < n * d; ++col) {
    // Effective step from the representable perturbed coordinates.
    const double x0 = initial.coords()[col];
    const double width = (x0 + steps[col]) - (x0 - steps[col]);
    for (std::size_t row = 0; row < n * d; ++row)
      jac.at(row, col) = (plus[col].coords()[row] - minus[col].coords()[row]) / width;
  }
  return jac;
}

}  // namespace meanfield

#endif  // MEANFIELD_DYNAMICS_HPP
