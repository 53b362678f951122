#ifndef MEANFIELD_DENSITY_HPP
#define MEANFIELD_DENSITY_HPP

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <random>
#include <string>
#include <vector>

#include <Eigen/Dense>
#include <boost/math/special_functions/erf.hpp>

#include "meanfield/core.hpp"
#include "meanfield/points.hpp"

namespace meanfield {

// Gaussian with mean and row-major covariance.
struct GaussianSpec {
  std::vector<double> mean;
  std::vector<double> cov;
};

struct MixtureComponent {
  double weight = 1.0;
  GaussianSpec gaussian;
};

struct GaussianMixtureSpec {
  std::vector<MixtureComponent> components;
};

// Axis-aligned box; lo == hi along an axis degenerates to a point mass there.
struct UniformSpec {
  std::vector<double> lo;
  std::vector<double> hi;
};

class DensitySpec {
 public:

  static DensitySpec gaussian(std::vector<double> mean, std::vector<double> cov) {
    return DensitySpec(GaussianMixtureSpec{{{1.0, {std::move(mean), std::move(cov)}}}}, true);
  }
  static DensitySpec standard_gaussian(std::size_t dim, double sigma = 1.0) {
    std::vector<double> cov(dim * dim, 0.0);
    for (std::size_t i = 0; i < dim; ++i) cov[i * dim + i] = sigma * sigma;
    return gaussian(std::vector<double>(dim, 0.0), std::move(cov));
  }
  static DensitySpec mixture(std::vector<MixtureComponent> components) {
    return DensitySpec(GaussianMixtureSpec{std::move(components)}, false);
  }
  static DensitySpec uniform(std::vector<double> lo, std::vector<double> hi) {
    require(lo.size() == hi.size() && !lo.empty(), "uniform density: lo/hi size mismatch");
    for (std::size_t i = 0; i < lo.size(); ++i)
      require(std::isfinite(lo[i]) && std::isfinite(hi[i]) && lo[i] <= hi[i],
              "uniform density: need finite lo <= hi");
    DensitySpec s;
    s.dim_ = lo.size();
    s.uniform_ = UniformSpec{std::move(lo), std::move(hi)};
    s.is_uniform_ = true;
    return s;
  }

  std::size_t dim() const noexcept { return dim_; }
  bool is_uniform() const noexcept { return is_uniform_; }
  bool is_single_gaussian() const noexcept { return single_; }
  const UniformSpec& uniform_spec() const { return uniform_; }
  const GaussianMixtureSpec& mixture_spec() const { return mixture_; }

  // One point drawn from the density.
  std::vector<double> draw(Rng& rng) const {
    std::vector<double> z(dim_);
    if (is_uniform_) {
      std::uniform_real_distribution<double> u(0.0, 1.0);
      for (std::size_t i = 0; i < dim_; ++i)
        z[i] = uniform_.lo[i] + (uniform_.hi[i] - uniform_.lo[i]) * u(rng);
      return z;
    }
    std::size_t c = 0;
    if (mixture_.components.size() > 1) {
      std::uniform_real_distribution<double> u(0.0, 1.0);
      double r = u(rng), acc = 0.0;
      c = mixture_.components.size() - 1;
      for (std::size_t i = 0; i < mixture_.components.size(); ++i) {
        acc += weights_[i];
        if (r < acc) {
          c = i;
          break;
        }
      }
    }
    std::normal_distribution<double> g(0.0, 1.0);
    std::vector<double> e(dim_);
    for (double& x : e) x = g(rng);
    const Eigen::MatrixXd& chol = factors_[c];
    const auto& mean = mixture_.components[c].gaussian.mean;
    for (std::size_t i = 0; i < dim_; ++i) {
      double s = mean[i];
      for (std::size_t j = 0; j <= i; ++j) s += chol(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) * e[j];
      z[i] = s;
    }
    return z;
  }

  // CDF in d = 1.
  double cdf(double x) const {
    require(dim_ == 1, "density cdf: only available in one dimension");
    if (is_uniform_) {
      const double lo = uniform_.lo[0], hi = uniform_.hi[0];
      if (hi == lo) return x >= lo ? 1.0 : 0.0;
      return std::clamp((x - lo) / (hi - lo), 0.0, 1.0);
    }
    double s = 0.0;
    for (std::size_t i = 0; i < mixture_.components.size(); ++i) {
      const auto& g = mixture_.components[i].gaussian;
      const double sd = std::sqrt(g.cov[0]);
      s += weights_[i] * (sd == 0.0 ? (x >= g.mean[0] ? 1.0 : 0.0)
                                    : 0.5 * std::erfc(-(x - g.mean[0]) / (sd * std::sqrt(2.0))));
    }
    return s;
  }

  // Quantile function in d = 1, u in (0, 1).
  double quantile(double u) const {
    require(dim_ == 1, "density quantile: only available in one dimension");
    require(u > 0.0 && u < 1.0, "density quantile: u must lie in (0, 1)");
    if (is_uniform_) return uniform_.lo[0] + (uniform_.hi[0] - uniform_.lo[0]) * u;
    if (single_) {
      const auto& g = mixture_.components[0].gaussian;
      return g.mean[0] + std::sqrt(2.0 * g.cov[0]) * boost::math::erf_inv(2.0 * u - 1.0);
    }
    double lo = std::numeric_limits<double>::infinity(), hi = -lo;
    for (const auto& c : mixture_.components) {
      const double sd = std::sqrt(c.gaussian.cov[0]);
      lo = std::min(lo, c.gaussian.mean[0] - 40.0 * sd - 1.0);
      hi = std::max(hi, c.gaussian.mean[0] + 40.0 * sd + 1.0);
    }
    for (int it = 0; it < 200 && hi - lo > 1e-15 * (1.0 + std::abs(lo)); ++it) {
      const double mid = 0.5 * (lo + hi);
      (cdf(mid) < u ? lo : hi) = mid;
    }
    return 0.5 * (lo + hi);
  }

  std::vector<double> mean() const {
    std::vector<double> m(dim_, 0.0);
    if (is_uniform_) {
      for (std::size_t i = 0; i < dim_; ++i) m[i] = 0.5 * (uniform_.lo[i] + uniform_.hi[i]);
      return m;
    }
    for (std::size_t c = 0; c < mixture_.components.size(); ++c)
      for (std::size_t i = 0; i < dim_; ++i) m[i] += weights_[c] * mixture_.components[c].gaussian.mean[i];
    return m;
  }

 private:
  DensitySpec() = default;

  DensitySpec(GaussianMixtureSpec mix, bool single) : mixture_(std::move(mix)), single_(single) {
    require(!mixture_.components.empty(), "gaussian mixture: need at least one component");
    dim_ = mixture_.components[0].gaussian.mean.size();
    require(dim_ >= 1, "gaussian density: empty mean");
    double total = 0.0;
    for (const auto& c : mixture_.components) {
      require(std::isfinite(c.weight) && c.weight > 0.0, "gaussian mixture: weights must be > 0");
      total += c.weight;
    }
    for (const auto& c : mixture_.components) {
      const auto& g = c.gaussian;
      require(g.mean.size() == dim_, "gaussian density: mean dimension mismatch");
      require(g.cov.size() == dim_ * dim_, "gaussian density: covariance must be d x d");
      for (double x : g.mean) require(std::isfinite(x), "gaussian density: non-finite mean");
      Eigen::MatrixXd cov(dim_, dim_);
      for (std::size_t i = 0; i < dim_; ++i)
        for (std::size_t j = 0; j < dim_; ++j) {
          const double v = g.cov[i * dim_ + j];
          require(std::isfinite(v), "gaussian density: non-finite covariance");
          require(std::abs(v - g.cov[j * dim_ + i]) <= 1e-12 * (1.0 + std::abs(v)),
                  "gaussian density: covariance must be symmetric");
          cov(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = v;
        }
      const Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(cov, Eigen::EigenvaluesOnly);
      require(eig.eigenvalues().minCoeff() >= -1e-12 * (1.0 + cov.cwiseAbs().maxCoeff()),
              "gaussian density: covariance must be positive semidefinite");
      factors_.push_back(lower_root(cov));
    }
    for (const auto& c : mixture_.components) weights_.push_back(c.weight / total);
  }

  // Cholesky-Crout with zero pivots allowed (PSD input).
  static Eigen::MatrixXd lower_root(const Eigen::MatrixXd& a) {
    const Eigen::Index n = a.rows();
    Eigen::MatrixXd l = Eigen::MatrixXd::Zero(n, n);
    for (Eigen::Index j = 0; j < n; ++j) {
      double s = a(j, j);
      for (Eigen::Index k = 0; k < j; ++k) s -= l(j, k) * l(j, k);
      l(j, j) = s > 0.0 ? std::sqrt(s) : 0.0;
      for (Eigen::Index i = j + 1; i < n; ++i) {
        double t = a(i, j);
        for (Eigen::Index k = 0; k < j; ++k) t -= l(i, k) * l(j, k);
        l(i, j) = l(j, j) > 0.0 ? t / l(j, j) : 0.0;
      }
    }
    return l;
  }

  std::size_t dim_ = 0;
  GaussianMixtureSpec mixture_;
  UniformSpec uniform_;
  bool is_uniform_ = false;
  bool single_ = false;
  std::vector<double> weights_;
  std::vector<Eigen::MatrixXd> factors_;
};

// `count` i.i.d. points from the density, seeded by (seed, stream, index).
inline ParticleConfiguration sample_points(const DensitySpec& f, std::size_t count, Rng& rng) {
  require(count >= 1, "sample_points: count must be >= 1");
  std::vector<double> coords;
  coords.reserve(count * f.dim());
  for (std::size_t k = 0; k < count; ++k) {
    const auto z = f.draw(rng);
    coords.insert(coords.end(), z.begin(), z.end());
  }
  return ParticleConfiguration(f.dim(), std::move(coords));
}

// Deterministic uniform-weight proxy in d = 1: atoms at the midpoint
// quantiles F^{-1}((i + 1/2) / count).
inline DiscreteMeasure quantize_1d(const DensitySpec& f, std::size_t count) {
  require(f.dim() == 1, "quantize_1d: density must be one-dimensional");
  require(count >= 1, "quantize_1d: count must be >= 1");
  std::vector<double> pts(count);
  for (std::size_t i = 0; i < count; ++i)
    pts[i] = f.quantile((static_cast<double>(i) + 0.5) / static_cast<double>(count));
  return DiscreteMeasure(1, std::move(pts),
                         std::vector<double>(count, 1.0 / static_cast<double>(count)));
}

}  // namespace meanfield

#endif  // MEANFIELD_DENSITY_HPP
