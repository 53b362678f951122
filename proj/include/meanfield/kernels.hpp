#ifndef MEANFIELD_KERNELS_HPP
#define MEANFIELD_KERNELS_HPP

#include <cmath>
#include <numbers>
#include <optional>
#include <random>
#include <span>
#include <string>
#include <variant>
#include <vector>

#include "meanfield/core.hpp"
#include "meanfield/points.hpp"

namespace meanfield {

// Pair potential for the smoothed Vlasov kernel. Both choices are even with a
// globally Lipschitz gradient whose constant is known in closed form.
enum class PotentialKind {
  kGaussian,  // V(x) = A exp(-|x|^2 / (2 eps^2)),   Lip(grad V) = |A| / eps^2
  kPlummer,   // V(x) = -A / sqrt(|x|^2 + eps^2),    Lip(grad V) = |A| / eps^3
};

namespace kernel_variant {
struct Zero {};
struct Linear {
  double c = 1.0;
};
// Phase space z = (x, xi) in R^s x R^s with V(x) = |x|^2 / 2.
struct HarmonicVlasov {
  int spatial_dim = 1;
};
struct SmoothedVlasov {
  int spatial_dim = 1;
  PotentialKind potential = PotentialKind::kGaussian;
  double amplitude = 1.0;
  double epsilon = 1.0;
};
// Regularized 2-D Biot-Savart: (1/2pi) J(z - z') / (|z - z'|^2 + eps^2).
struct SmoothedBiotSavart {
  double epsilon = 1.0;
};
}  // namespace kernel_variant

// Antisymmetric, globally Lipschitz pair interaction K(z, z') on R^d together
// with its declared Lipschitz constant. Immutable once built.
class InteractionKernel {
 public:
  using Variant = std::variant<kernel_variant::Zero, kernel_variant::Linear,
                               kernel_variant::HarmonicVlasov, kernel_variant::SmoothedVlasov,
                               kernel_variant::SmoothedBiotSavart>;

  static InteractionKernel zero(int dim) {
    require(dim >= 1, "zero kernel: dim must be >= 1");
    return InteractionKernel(kernel_variant::Zero{}, dim, 0.0);
  }

  static InteractionKernel linear(double c, int dim) {
    require(dim >= 1, "linear kernel: dim must be >= 1");
    require(std::isfinite(c), "linear kernel: c must be finite");
    return InteractionKernel(kernel_variant::Linear{c}, dim, std::abs(c));
  }

  static InteractionKernel harmonic_vlasov(int spatial_dim) {
    require(spatial_dim >= 1, "harmonic_vlasov: spatial_dim must be >= 1");
    return InteractionKernel(kernel_variant::HarmonicVlasov{spatial_dim}, 2 * spatial_dim, 1.0);
  }

  static InteractionKernel smoothed_vlasov(int spatial_dim, PotentialKind potential,
                                           double amplitude, double epsilon) {
    require(spatial_dim >= 1, "smoothed_vlasov: spatial_dim must be >= 1");
    require(epsilon > 0.0 && std::isfinite(epsilon), "smoothed_vlasov: epsilon must be > 0");
    require(std::isfinite(amplitude), "smoothed_vlasov: amplitude must be finite");
    const double grad_lip = potential == PotentialKind::kGaussian
                                ? std::abs(amplitude) / (epsilon * epsilon)
                                : std::abs(amplitude) / (epsilon * epsilon * epsilon);
    // |K(z1,z') - K(z2,z')|^2 = |dxi|^2 + |dgradV|^2 <= max(1, l)^2 |dz|^2.
    return InteractionKernel(
        kernel_variant::SmoothedVlasov{spatial_dim, potential, amplitude, epsilon},
        2 * spatial_dim, std::max(1.0, grad_lip));
  }

  static InteractionKernel smoothed_biot_savart(double epsilon) {
    require(epsilon > 0.0 && std::isfinite(epsilon), "smoothed_biot_savart: epsilon must be > 0");
    // u -> u / (|u|^2 + eps^2) has Jacobian norm at most 1/eps^2 (attained at u = 0).
    return InteractionKernel(kernel_variant::SmoothedBiotSavart{epsilon}, 2,
                             1.0 / (2.0 * std::numbers::pi * epsilon * epsilon));
  }

  int dim() const noexcept { return dim_; }
  double lipschitz() const noexcept { return lipschitz_; }
  const Variant& variant() const noexcept { return variant_; }

  std::string name() const {
    return std::visit(
        [](const auto& v) -> std::string {
          using T = std::decay_t<decltype(v)>;
          if constexpr (std::is_same_v<T, kernel_variant::Zero>) return "zero";
          if constexpr (std::is_same_v<T, kernel_variant::Linear>) return "linear";
          if constexpr (std::is_same_v<T, kernel_variant::HarmonicVlasov>) return "harmonic_vlasov";
          if constexpr (std::is_same_v<T, kernel_variant::SmoothedVlasov>) return "smoothed_vlasov";
          if constexpr (std::is_same_v<T, kernel_variant::SmoothedBiotSavart>)
            return "smoothed_biot_savart";
        },
        variant_);
  }

  bool is_vlasov() const {
    return std::holds_alternative<kernel_variant::HarmonicVlasov>(variant_) ||
           std::holds_alternative<kernel_variant::SmoothedVlasov>(variant_);
  }

  // When K(z, z') = A (z - z') for a constant d x d matrix A, returns A
  // (row-major). The mean-field sum then collapses to A (z - barycenter).
  std::optional<std::vector<double>> affine_matrix() const {
    const std::size_t d = static_cast<std::size_t>(dim_);
    std::vector<double> a(d * d, 0.0);
    if (std::holds_alternative<kernel_variant::Zero>(variant_)) return a;
    if (const auto* lin = std::get_if<kernel_variant::Linear>(&variant_)) {
      for (std::size_t i = 0; i < d; ++i) a[i * d + i] = lin->c;
      return a;
    }
    if (std::holds_alternative<kernel_variant::HarmonicVlasov>(variant_)) {
      const std::size_t s = d / 2;
      for (std::size_t i = 0; i < s; ++i) {
        a[i * d + (s + i)] = 1.0;    // dx = xi - xi'
        a[(s + i) * d + i] = -1.0;   // dxi = -(x - x')
      }
      return a;
    }
    return std::nullopt;
  }

  // K(z, z') written into `out`. No dimension checks; see eval_kernel.
  void eval_into(std::span<const double> z, std::span<const double> zp,
                 std::span<double> out) const {
    std::visit([&](const auto& v) { eval_impl(v, z, zp, out); }, variant_);
  }

  // Pair potential V(x) of a Vlasov-type kernel.
  double potential(std::span<const double> x) const {
    if (std::holds_alternative<kernel_variant::HarmonicVlasov>(variant_)) {
      double s = 0.0;
      for (double v : x) s += v * v;
      return 0.5 * s;
    }
    if (const auto* sv = std::get_if<kernel_variant::SmoothedVlasov>(&variant_)) {
      double r2 = 0.0;
      for (double v : x) r2 += v * v;
      const double e2 = sv->epsilon * sv->epsilon;
      if (sv->potential == PotentialKind::kGaussian)
        return sv->amplitude * std::exp(-r2 / (2.0 * e2));
      return -sv->amplitude / std::sqrt(r2 + e2);
    }
    throw UnsupportedKernelError("potential: kernel '" + name() + "' is not of Vlasov type");
  }

 private:
  InteractionKernel(Variant v, int dim, double lip)
      : variant_(std::move(v)), dim_(dim), lipschitz_(lip) {}

  static void eval_impl(const kernel_variant::Zero&, std::span<const double>,
                        std::span<const double>, std::span<double> out) {
    for (double& o : out) o = 0.0;
  }

  static void eval_impl(const kernel_variant::Linear& k, std::span<const double> z,
                        std::span<const double> zp, std::span<double> out) {
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = k.c * (z[i] - zp[i]);
  }

  static void eval_impl(const kernel_variant::HarmonicVlasov& k, std::span<const double> z,
                        std::span<const double> zp, std::span<double> out) {
    const std::size_t s = static_cast<std::size_t>(k.spatial_dim);
    for (std::size_t i = 0; i < s; ++i) {
      out[i] = z[s + i] - zp[s + i];
      out[s + i] = -(z[i] - zp[i]);
    }
  }

  static void eval_impl(const kernel_variant::SmoothedVlasov& k, std::span<const double> z,
                        std::span<const double> zp, std::span<double> out) {
    const std::size_t s = static_cast<std::size_t>(k.spatial_dim);
    double r2 = 0.0;
    for (std::size_t i = 0; i < s; ++i) {
      const double dx = z[i] - zp[i];
      r2 += dx * dx;
    }
    const double e2 = k.epsilon * k.epsilon;
    // grad V(x) = g(|x|^2) x
    double g = 0.0;
    if (k.potential == PotentialKind::kGaussian) {
      g = -k.amplitude / e2 * std::exp(-r2 / (2.0 * e2));
    } else {
      const double q = r2 + e2;
      g = k.amplitude / (q * std::sqrt(q));
    }
    for (std::size_t i = 0; i < s; ++i) {
      out[i] = z[s + i] - zp[s + i];
      out[s + i] = -g * (z[i] - zp[i]);
    }
  }

  static void eval_impl(const kernel_variant::SmoothedBiotSavart& k, std::span<const double> z,
                        std::span<const double> zp, std::span<double> out) {
    const double u0 = z[0] - zp[0];
    const double u1 = z[1] - zp[1];
    const double scale =
        1.0 / (2.0 * std::numbers::pi * (u0 * u0 + u1 * u1 + k.epsilon * k.epsilon));
    // J = [[0, -1], [1, 0]]
    out[0] = -u1 * scale;
    out[1] = u0 * scale;
  }

  Variant variant_;
  int dim_;
  double lipschitz_;
};

inline std::vector<double> eval_kernel(const InteractionKernel& kernel,
                                       std::span<const double> z, std::span<const double> zp) {
  const std::size_t d = static_cast<std::size_t>(kernel.dim());
  require(z.size() == d && zp.size() == d,
          "eval_kernel: points must have dimension " + std::to_string(d));
  std::vector<double> out(d);
  kernel.eval_into(z, zp, out);
  return out;
}

// Mean-field force K mu(z) = sum_i w_i K(z, p_i).
inline std::vector<double> mean_field_force(const InteractionKernel& kernel,
                                            const DiscreteMeasure& mu,
                                            std::span<const double> z) {
  const std::size_t d = static_cast<std::size_t>(kernel.dim());
  require(mu.dim() == d, "mean_field_force: measure dimension does not match kernel");
  require(z.size() == d, "mean_field_force: point dimension does not match kernel");
  const std::size_t n = mu.size();
  std::vector<double> terms(n * d);
  for (std::size_t i = 0; i < n; ++i) {
    std::span<double> out(terms.data() + i * d, d);
    kernel.eval_into(z, mu.point(i), out);
    for (double& o : out) o *= mu.weight(i);
  }
  std::vector<double> force(d);
  std::vector<double> column(n);
  for (std::size_t c = 0; c < d; ++c) {
    for (std::size_t i = 0; i < n; ++i) column[i] = terms[i * d + c];
    force[c] = pairwise_sum(column);
  }
  return force;
}

struct KernelReport {
  double max_antisym_defect = 0.0;
  double lipschitz_lb = 0.0;
  double declared_lipschitz = 0.0;
  bool pass = true;
};

// Randomized check of antisymmetry and of the declared Lipschitz constant.
// Pairs are drawn uniformly from the cube [-radius, radius]^d; half of the
// Lipschitz probes use nearby points to sample local slopes.
inline KernelReport validate_kernel(const InteractionKernel& kernel, int samples, double radius,
                                    std::uint64_t seed) {
  require(samples >= 1, "validate_kernel: samples must be >= 1");
  const std::size_t d = static_cast<std::size_t>(kernel.dim());
  Rng rng = make_rng(seed, Stream::kTrials, 0);
  std::uniform_real_distribution<double> box(-radius, radius);
  std::uniform_real_distribution<double> small(-1e-3 * (1.0 + radius), 1e-3 * (1.0 + radius));
  std::vector<double> z(d), zp(d), z2(d), a(d), b(d);
  KernelReport rep;
  rep.declared_lipschitz = kernel.lipschitz();
  for (int s = 0; s < samples; ++s) {
    for (std::size_t i = 0; i < d; ++i) {
      z[i] = box(rng);
      zp[i] = box(rng);
    }
    if (s % 2 == 0) {
      for (std::size_t i = 0; i < d; ++i) z2[i] = box(rng);
    } else {
      for (std::size_t i = 0; i < d; ++i) z2[i] = z[i] + small(rng);
    }
    kernel.eval_into(z, zp, a);
    kernel.eval_into(zp, z, b);
    double defect = 0.0;
    for (std::size_t i = 0; i < d; ++i) defect = std::max(defect, std::abs(a[i] + b[i]));
    rep.max_antisym_defect = std::max(rep.max_antisym_defect, defect);

    kernel.eval_into(z2, zp, b);
    const double dz = distance(z, z2);
    if (dz > 0.0) {
      double diff = 0.0;
      for (std::size_t i = 0; i < d; ++i) diff += (a[i] - b[i]) * (a[i] - b[i]);
      rep.lipschitz_lb = std::max(rep.lipschitz_lb, std::sqrt(diff) / dz);
    }
  }
  rep.pass = rep.lipschitz_lb <= kernel.lipschitz() * (1.0 + 1e-9) &&
             rep.max_antisym_defect <= 1e-12;
  return rep;
}

}  // namespace meanfield

#endif  // MEANFIELD_KERNELS_HPP
