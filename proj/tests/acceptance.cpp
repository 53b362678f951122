// Acceptance suite: one PASS/FAIL line per criterion. Exit status is zero
// only when every criterion passes.

#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <functional>
#include <map>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include "meanfield/meanfield.hpp"

namespace mf = meanfield;
namespace lab = meanfield::lab;

namespace {

struct Verdict {
  bool pass = false;
  std::string detail;
};

struct Criterion {
  int id;
  std::string title;
  double time_limit;  // seconds
  std::function<Verdict()> run;
};

std::string fmt(double x) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.3g", x);
  return buf;
}

mf::DiscreteMeasure random_measure(mf::Rng& rng, std::size_t dim, std::size_t n, bool uniform) {
  std::normal_distribution<double> g(0.0, 1.0);
  std::uniform_real_distribution<double> u(0.05, 1.0);
  std::vector<double> c(dim * n), w(n, 1.0 / static_cast<double>(n));
  for (double& x : c) x = g(rng);
  if (!uniform) {
    for (double& x : w) x = u(rng);
    w = mf::normalized(w);
  }
  return mf::DiscreteMeasure(dim, c, w);
}

std::vector<mf::InteractionKernel> builtin_kernels() {
  return {mf::InteractionKernel::zero(2),
          mf::InteractionKernel::linear(1.0, 2),
          mf::InteractionKernel::harmonic_vlasov(1),
          mf::InteractionKernel::smoothed_vlasov(1, mf::PotentialKind::kGaussian, 1.0, 0.5),
          mf::InteractionKernel::smoothed_vlasov(1, mf::PotentialKind::kPlummer, 1.0, 1.0),
          mf::InteractionKernel::smoothed_biot_savart(0.5)};
}

// Shipped scenario configs, run once and kept for the determinism rerun.
std::map<std::string, mf::lab::ScenarioResult> g_first_runs;

const char* const kConfigs[] = {"w1_selftest.json",      "dobrushin.json",      "dobrushin_zero.json",
                                "chaos.json",            "hierarchy_identity.json", "nested_stability.json",
                                "qn_convergence.json",   "spohn_jacobian.json"};

lab::ExperimentConfig load_config(const std::string& file) {
  const std::string path = std::string(MEANFIELD_SOURCE_DIR) + "/configs/" + file;
  return lab::parse_config(mf::read_text(path), path);
}

const lab::ScenarioResult& run_config(const std::string& file) {
  auto it = g_first_runs.find(file);
  if (it == g_first_runs.end()) it = g_first_runs.emplace(file, lab::run_scenario(load_config(file))).first;
  return it->second;
}

std::vector<std::vector<std::string>> csv_rows(const lab::ScenarioResult& r, const std::string& name) {
  for (const auto& f : r.files) {
    if (f.name != name) continue;
    std::vector<std::vector<std::string>> rows;
    std::istringstream in(f.content);
    std::string line;
    std::getline(in, line);  // header
    while (std::getline(in, line)) {
      std::vector<std::string> cells;
      std::stringstream ls(line);
      std::string cell;
      while (std::getline(ls, cell, ',')) cells.push_back(cell);
      rows.push_back(cells);
    }
    return rows;
  }
  throw std::runtime_error("missing output " + name);
}

// ---------------------------------------------------------------------------

Verdict w1_oracles() {
  double brute = 0.0, sorted = 0.0;
  for (std::uint64_t i = 0; i < 200; ++i) {
    mf::Rng rng = mf::make_rng(1, mf::Stream::kInstances, i);
    const std::size_t n = 1 + rng() % 7, dim = 1 + i % 2;
    const auto a = random_measure(rng, dim, n, true), b = random_measure(rng, dim, n, true);
    brute = std::max(brute, std::abs(mf::w1_exact(a, b).distance - mf::w1_brute_force(a, b)));
  }
  for (std::uint64_t i = 0; i < 200; ++i) {
    mf::Rng rng = mf::make_rng(2, mf::Stream::kInstances, i);
    const auto a = random_measure(rng, 1, 1 + rng() % 64, false);
    const auto b = random_measure(rng, 1, 1 + rng() % 64, false);
    sorted = std::max(sorted, std::abs(mf::w1_exact(a, b).distance - mf::w1_sorted_1d(a, b)));
  }
  return {brute <= 1e-9 && sorted <= 1e-9, "max|exact-brute|=" + fmt(brute) + " max|exact-sorted|=" + fmt(sorted)};
}

Verdict weak_duality() {
  double violation = -1e300, gap = 0.0;
  for (std::uint64_t i = 0; i < 200; ++i) {
    mf::Rng rng = mf::make_rng(3, mf::Stream::kInstances, i);
    const std::size_t dim = 1 + i % 2;
    const auto a = random_measure(rng, dim, 1 + rng() % 12, false);
    const auto b = random_measure(rng, dim, 1 + rng() % 12, false);
    violation = std::max(violation, mf::w1_dual_lb(a, b, 32, rng()) - mf::w1_exact(a, b).distance);
    const auto da = random_measure(rng, dim, 1, true), db = random_measure(rng, dim, 1, true);
    gap = std::max(gap, std::abs(mf::w1_exact(da, db).distance - mf::w1_dual_lb(da, db, 32, rng())));
  }
  return {violation <= 1e-9 && gap <= 1e-9, "max(lb-exact)=" + fmt(violation) + " two-Dirac gap=" + fmt(gap)};
}

Verdict tensorization() {
  double worst = -1e300;
  for (std::uint64_t i = 0; i < 100; ++i) {
    mf::Rng rng = mf::make_rng(4, mf::Stream::kInstances, i);
    const std::size_t dim = 1 + i % 2;
    const auto a = random_measure(rng, dim, 1 + rng() % 5, false);
    const auto b = random_measure(rng, dim, 1 + rng() % 5, false);
    const int m = 1 + static_cast<int>(i % 3);
    worst = std::max(worst, mf::w1(mf::tensor_power(a, m), mf::tensor_power(b, m)) - m * mf::w1(a, b));
  }
  return {worst <= 1e-9, "max(W1(mu^m,nu^m) - m W1(mu,nu))=" + fmt(worst)};
}

Verdict analytic_flow() {
  const auto k = mf::InteractionKernel::linear(1.0, 1);
  const mf::ParticleConfiguration z0(1, {-0.3, 1.1});
  const auto z1 = mf::integrate_flow(k, z0, {1e-3, 1.0});
  const double bar = 0.5 * (-0.3 + 1.1);
  double err = 0.0;
  for (std::size_t i = 0; i < 2; ++i)
    err = std::max(err, std::abs(z1.coords()[i] - (bar + std::exp(1.0) * (z0.coords()[i] - bar))));
  const auto back = mf::integrate_flow(k, z1, {1e-3, -1.0});
  double trip = 0.0;
  for (std::size_t i = 0; i < 2; ++i) trip = std::max(trip, std::abs(back.coords()[i] - z0.coords()[i]));
  return {err <= 1e-8 && trip <= 1e-7, "max error=" + fmt(err) + " round trip=" + fmt(trip)};
}

Verdict conservation() {
  double drift = 0.0;
  std::string worst_kernel;
  for (const auto& k : builtin_kernels()) {
    mf::Rng rng = mf::make_rng(5, mf::Stream::kSamples, 0);
    const auto z0 = mf::sample_points(mf::DensitySpec::standard_gaussian(static_cast<std::size_t>(k.dim())), 128, rng);
    const auto z1 = mf::integrate_flow(k, z0, mf::default_params(k, 1.0));
    const double d = mf::distance(mf::DiscreteMeasure::empirical(z0).barycenter(),
                                  mf::DiscreteMeasure::empirical(z1).barycenter());
    if (d >= drift) {
      drift = d;
      worst_kernel = k.name();
    }
  }
  const auto h = mf::InteractionKernel::harmonic_vlasov(1);
  mf::Rng rng = mf::make_rng(5, mf::Stream::kSamples, 1);
  const auto z0 = mf::sample_points(mf::DensitySpec::standard_gaussian(2), 128, rng);
  const double e0 = mf::energy(h, z0);
  const double e1 = mf::energy(h, mf::integrate_flow(h, z0, mf::default_params(h, 1.0)));
  const double rel = std::abs(e1 - e0) / std::abs(e0);
  return {drift <= 1e-10 && rel <= 1e-8,
          "max barycenter drift=" + fmt(drift) + " (" + worst_kernel + ") harmonic energy drift=" + fmt(rel)};
}

Verdict dobrushin() {
  const auto& r = run_config("dobrushin.json");
  double worst = 0.0;
  for (const auto& row : csv_rows(r, "dobrushin.csv")) worst = std::max(worst, std::stod(row[3]) / std::stod(row[4]));
  return {r.pass, "max dist/bound=" + fmt(worst) + " (limit 1.05)"};
}

Verdict moments() {
  const double t = 1.0;
  double traj_excess = -1e300, ens_excess = -1e300;
  for (const auto& k : builtin_kernels()) {
    const std::size_t d = static_cast<std::size_t>(k.dim());
    const double big_l = k.lipschitz();
    mf::Rng rng = mf::make_rng(6, mf::Stream::kSamples, 0);
    const auto z0 = mf::sample_points(mf::DensitySpec::standard_gaussian(d), 128, rng);
    const auto z1 = mf::integrate_flow(k, z0, mf::default_params(k, t));
    for (double r : {1.0, 2.0}) {
      const double m0 = mf::DiscreteMeasure::empirical(z0).moment(r);
      const double m1 = mf::DiscreteMeasure::empirical(z1).moment(r);
      traj_excess = std::max(traj_excess, m1 / (std::exp(2.0 * big_l * r * t) * m0 * (1.0 + 1e-6)) - 1.0);
    }
  }
  for (const auto& k : {mf::InteractionKernel::harmonic_vlasov(1),
                        mf::InteractionKernel::smoothed_vlasov(1, mf::PotentialKind::kGaussian, 1.0, 0.5)}) {
    const std::size_t d = static_cast<std::size_t>(k.dim());
    const auto ens0 = mf::sample_product_ensemble(mf::DensitySpec::standard_gaussian(d), 8, 2048, 66);
    const auto ens1 = mf::propagate_ensemble(ens0, k, mf::FlowParams{1e-2, t});
    for (double r : {1.0, 2.0}) {
      std::vector<double> v0(ens0.size()), v1(ens1.size());
      for (std::size_t s = 0; s < ens0.size(); ++s) {
        v0[s] = mf::DiscreteMeasure::empirical(ens0.samples[s]).moment(r);
        v1[s] = mf::DiscreteMeasure::empirical(ens1.samples[s]).moment(r);
      }
      const auto a = mf::mean_and_stderr(v0), b = mf::mean_and_stderr(v1);
      const double growth = std::exp(2.0 * k.lipschitz() * r * t);
      const double se = std::hypot(growth * a.std_error, b.std_error);
      ens_excess = std::max(ens_excess, b.value - (growth * a.value + 3.0 * se));
    }
  }
  return {traj_excess <= 0.0 && ens_excess <= 0.0,
          "trajectory max(ratio-1)=" + fmt(traj_excess) + " ensemble max excess=" + fmt(ens_excess)};
}

Verdict combinatorial() {
  // Exact prefactor and defect for (N, m) = (3, 2) by enumerating all maps.
  std::size_t injective = 0, total = 0;
  for (std::size_t i = 0; i < 3; ++i)
    for (std::size_t j = 0; j < 3; ++j, ++total) injective += i != j;
  const auto pf = mf::combinatorial_prefactor(3, 2);
  const double oracle = static_cast<double>(injective) / static_cast<double>(total);
  const bool exact = std::abs(pf.prefactor - oracle) <= 1e-15 && std::abs(pf.defect_bound - (1.0 - oracle)) <= 1e-15 &&
                     std::abs(pf.prefactor - 2.0 / 3.0) <= 1e-15;

  const auto& r = run_config("hierarchy_identity.json");
  double worst = 0.0;
  bool within = true;
  int n8 = 0;
  for (const auto& row : csv_rows(r, "hierarchy_identity.csv")) {
    const double gap = std::abs(std::stod(row[3]) - std::stod(row[4]));
    const double sigma = std::stod(row[6]);
    within = within && gap <= 3.0 * sigma + 1e-12;
    worst = std::max(worst, gap / sigma);
    n8 += row[0] == "8";
  }
  return {exact && within && r.pass && n8 == 3,
          "prefactor(3,2)=" + fmt(pf.prefactor) + " defect=" + fmt(pf.defect_bound) + " max gap/sigma=" + fmt(worst)};
}

Verdict chaoticity() {
  const auto cfg = load_config("chaos.json");
  const auto& r = run_config("chaos.json");
  const auto rows = csv_rows(r, "chaos.csv");
  bool pooled = true, bounded = true;
  for (const auto& row : rows) {
    pooled = pooled && std::stod(row[0]) * std::stod(row[1]) >= 16384.0;
    bounded = bounded && std::stod(row[3]) <= std::stod(row[5]) * (1.0 + 1e-12);
  }
  const double slope = std::stod(rows.front()[6]);
  const bool ok = r.pass && pooled && bounded && slope <= -0.2 + 0.05 && cfg.kernel().name() == "linear" &&
                  rows.size() == 7;
  return {ok, "slope=" + fmt(slope) + " (limit -0.15), N=8..512, min N*S=" +
                  std::to_string(std::stoul(rows.front()[0]) * std::stoul(rows.front()[1]))};
}

Verdict nested_stability() {
  const auto& r = run_config("nested_stability.json");
  double worst = 0.0;
  for (const auto& row : csv_rows(r, "nested_stability.csv"))
    worst = std::max(worst, std::stod(row[2]) / std::stod(row[3]));
  return {r.pass, "max dist_t/bound=" + fmt(worst) + " (limit 1.1)"};
}

Verdict qn_decrease() {
  const auto& r = run_config("qn_convergence.json");
  const auto rows = csv_rows(r, "qn_convergence.csv");
  const double d16 = std::stod(rows.front()[3]), d256 = std::stod(rows.back()[3]);
  return {r.pass && d256 <= 0.75 * d16 && rows.front()[0] == "16" && rows.back()[0] == "256",
          "nested W1 at N=16: " + fmt(d16) + ", N=256: " + fmt(d256) + " (decrease " + fmt(1.0 - d256 / d16) + ")"};
}

Verdict jacobian_bounds() {
  const auto& r = run_config("spohn_jacobian.json");
  double ratio = 0.0, alpha = -1e300, beta = -1e300, residual = 0.0;
  for (const auto& row : csv_rows(r, "spohn_jacobian.csv")) {
    ratio = std::max(ratio, std::stod(row[3]));
    alpha = std::max(alpha, std::stod(row[4]));
    beta = std::max(beta, std::stod(row[5]));
    residual = std::max(residual, std::stod(row[6]));
  }
  return {r.pass && alpha <= 1e-3 && beta <= 1e-3 && residual <= 1e-6,
          "max alpha excess=" + fmt(alpha) + " beta excess=" + fmt(beta) + " ratio=" + fmt(ratio) +
              " Liouville residual=" + fmt(residual)};
}

Verdict determinism() {
  ::setenv("MEANFIELD_THREADS", "2", 1);
  std::size_t compared = 0;
  std::string mismatch;
  for (const char* file : kConfigs) {
    const auto& first = run_config(file);
    const auto second = lab::run_scenario(load_config(file));
    if (second.files.size() != first.files.size()) mismatch += std::string(" ") + file;
    for (std::size_t i = 0; i < std::min(first.files.size(), second.files.size()); ++i) {
      ++compared;
      if (first.files[i].content != second.files[i].content) mismatch += " " + first.files[i].name;
    }
    if (first.summary.dump() != second.summary.dump()) mismatch += std::string(" summary:") + file;
  }
  ::unsetenv("MEANFIELD_THREADS");
  return {mismatch.empty(), std::to_string(compared) + " output files identical across reruns" +
                                (mismatch.empty() ? "" : "; differ:" + mismatch)};
}

}  // namespace

int main() {
  const std::vector<Criterion> criteria{
      {1, "W1 oracle equivalence", 10, w1_oracles},
      {2, "Weak duality", 10, weak_duality},
      {3, "Tensorization inequality", 30, tensorization},
      {4, "Analytic linear flow", 1, analytic_flow},
      {5, "Barycenter and energy conservation", 10, conservation},
      {6, "Dobrushin stability bound", 120, dobrushin},
      {7, "Moment bounds", 120, moments},
      {8, "Combinatorial identity", 60, combinatorial},
      {9, "Chaoticity rate", 300, chaoticity},
      {10, "Nested stability", 300, nested_stability},
      {11, "Empirical projections converge", 120, qn_decrease},
      {12, "Flow Jacobian bounds and Liouville identity", 120, jacobian_bounds},
      {13, "Determinism", 1e9, determinism},
  };
  int passed = 0;
  for (const auto& c : criteria) {
    const auto start = std::chrono::steady_clock::now();
    Verdict v;
    try {
      v = c.run();
    } catch (const std::exception& e) {
      v = {false, std::string("error: ") + e.what()};
    }
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    const bool in_time = secs < c.time_limit;
    const bool ok = v.pass && in_time;
    passed += ok;
    std::printf("%s %2d %s: %s [%.2f s%s]\n", ok ? "PASS" : "FAIL", c.id, c.title.c_str(), v.detail.c_str(), secs,
                in_time ? "" : ", over time limit");
    std::fflush(stdout);
  }
  std::printf("%d/%zu criteria passed\n", passed, criteria.size());
  return passed == static_cast<int>(criteria.size()) ? 0 : 1;
}
