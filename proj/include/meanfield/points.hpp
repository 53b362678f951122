#ifndef MEANFIELD_POINTS_HPP
#define MEANFIELD_POINTS_HPP

#include <cmath>
#include <cstddef>
#include <numeric>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "meanfield/core.hpp"

namespace meanfield {

// N points in R^d stored row-major: point k occupies coords[k*d, (k+1)*d).
class ParticleConfiguration {
 public:
  ParticleConfiguration() = default;

  ParticleConfiguration(std::size_t dim, std::vector<double> coords)
      : dim_(dim), coords_(std::move(coords)) {
    require(dim_ >= 1, "ParticleConfiguration: dimension must be >= 1");
    require(coords_.size() % dim_ == 0,
            "ParticleConfiguration: coordinate count not a multiple of dim");
    require(!coords_.empty(), "ParticleConfiguration: need at least one point");
    for (double x : coords_)
      require(std::isfinite(x), "ParticleConfiguration: non-finite coordinate");
  }

  static ParticleConfiguration zeros(std::size_t dim, std::size_t count) {
    return ParticleConfiguration(dim, std::vector<double>(dim * count, 0.0));
  }

  std::size_t dim() const noexcept { return dim_; }
  std::size_t count() const noexcept { return dim_ == 0 ? 0 : coords_.size() / dim_; }

  std::span<const double> point(std::size_t k) const {
    return {coords_.data() + k * dim_, dim_};
  }
  std::span<double> point(std::size_t k) { return {coords_.data() + k * dim_, dim_}; }

  const std::vector<double>& coords() const noexcept { return coords_; }
  std::vector<double>& coords() noexcept { return coords_; }

  std::vector<double> barycenter() const {
    std::vector<double> b(dim_, 0.0);
    const std::size_t n = count();
    std::vector<double> column(n);
    for (std::size_t c = 0; c < dim_; ++c) {
      for (std::size_t k = 0; k < n; ++k) column[k] = coords_[k * dim_ + c];
      b[c] = pairwise_sum(column) / static_cast<double>(n);
    }
    return b;
  }

  // Applies `perm`: the result's point k is this configuration's point perm[k].
  ParticleConfiguration permuted(std::span<const std::size_t> perm) const {
    std::vector<double> out(coords_.size());
    for (std::size_t k = 0; k < perm.size(); ++k)
      std::copy_n(coords_.data() + perm[k] * dim_, dim_, out.data() + k * dim_);
    return ParticleConfiguration(dim_, std::move(out));
  }

  friend bool operator==(const ParticleConfiguration&, const ParticleConfiguration&) = default;

 private:
  std::size_t dim_ = 0;
  std::vector<double> coords_;
};

// Weighted point cloud, a finitely supported probability measure on R^d.
class DiscreteMeasure {
 public:
  static constexpr double kMassTolerance = 1e-12;

  DiscreteMeasure() = default;

  DiscreteMeasure(std::size_t dim, std::vector<double> coords, std::vector<double> weights)
      : dim_(dim), coords_(std::move(coords)), weights_(std::move(weights)) {
    require(dim_ >= 1, "DiscreteMeasure: dimension must be >= 1");
    require(coords_.size() == dim_ * weights_.size(),
            "DiscreteMeasure: coordinates do not match weights");
    require(!weights_.empty(), "DiscreteMeasure: empty support");
    for (double x : coords_) require(std::isfinite(x), "DiscreteMeasure: non-finite point");
    for (double w : weights_)
      require(std::isfinite(w) && w >= 0.0, "DiscreteMeasure: negative weight");
    const double total = pairwise_sum(weights_);
    require(std::abs(total - 1.0) <= kMassTolerance,
            "DiscreteMeasure: weights sum to " + std::to_string(total) + ", not 1");
  }

  // Empirical measure (1/N) sum_k delta_{z_k}.
  static DiscreteMeasure empirical(const ParticleConfiguration& z) {
    const std::size_t n = z.count();
    return DiscreteMeasure(z.dim(), z.coords(),
                           std::vector<double>(n, 1.0 / static_cast<double>(n)));
  }

  static DiscreteMeasure dirac(std::vector<double> point) {
    const std::size_t d = point.size();
    return DiscreteMeasure(d, std::move(point), {1.0});
  }

  std::size_t dim() const noexcept { return dim_; }
  std::size_t size() const noexcept { return weights_.size(); }

  std::span<const double> point(std::size_t i) const {
    return {coords_.data() + i * dim_, dim_};
  }
  double weight(std::size_t i) const { return weights_[i]; }

  const std::vector<double>& coords() const noexcept { return coords_; }
  const std::vector<double>& weights() const noexcept { return weights_; }

  // True when every weight equals 1/n to within the mass tolerance.
  bool is_uniform() const {
    const double u = 1.0 / static_cast<double>(size());
    for (double w : weights_)
      if (std::abs(w - u) > kMassTolerance) return false;
    return true;
  }

  std::vector<double> barycenter() const {
    std::vector<double> b(dim_, 0.0);
    std::vector<double> terms(size());
    for (std::size_t c = 0; c < dim_; ++c) {
      for (std::size_t i = 0; i < size(); ++i) terms[i] = weights_[i] * coords_[i * dim_ + c];
      b[c] = pairwise_sum(terms);
    }
    return b;
  }

  // Integral of |z|^r.
  double moment(double r) const {
    std::vector<double> terms(size());
    for (std::size_t i = 0; i < size(); ++i) terms[i] = weights_[i] * std::pow(norm(point(i)), r);
    return pairwise_sum(terms);
  }

  ParticleConfiguration support() const { return ParticleConfiguration(dim_, coords_); }

  DiscreteMeasure with_points(std::vector<double> coords) const {
    return DiscreteMeasure(dim_, std::move(coords), weights_);
  }

  DiscreteMeasure translated(std::span<const double> shift) const {
    require(shift.size() == dim_, "DiscreteMeasure::translated: dimension mismatch");
    std::vector<double> c = coords_;
    for (std::size_t i = 0; i < size(); ++i)
      for (std::size_t k = 0; k < dim_; ++k) c[i * dim_ + k] += shift[k];
    return with_points(std::move(c));
  }

 private:
  std::size_t dim_ = 0;
  std::vector<double> coords_;
  std::vector<double> weights_;
};

// Normalizes nonnegative weights to sum exactly to one (up to rounding).
inline std::vector<double> normalized(std::vector<double> w) {
  const double total = pairwise_sum(w);
  require(total > 0.0, "normalized: weights sum to zero");
  for (double& x : w) x /= total;
  return w;
}

}  // namespace meanfield

#endif  // MEANFIELD_POINTS_HPP
