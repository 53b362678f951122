#ifndef MEANFIELD_EXPERIMENT_HPP
#define MEANFIELD_EXPERIMENT_HPP

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <ctime>
#include <filesystem>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include <boost/version.hpp>
#include <Eigen/Core>
#include <json.hpp>

#include "meanfield/core.hpp"
#include "meanfield/density.hpp"
#include "meanfield/dynamics.hpp"
#include "meanfield/ensembles.hpp"
#include "meanfield/hierarchy.hpp"
#include "meanfield/io.hpp"
#include "meanfield/kernels.hpp"
#include "meanfield/spohn.hpp"
#include "meanfield/test_functions.hpp"
#include "meanfield/transport.hpp"

namespace meanfield::lab {

inline constexpr const char* kVersion = "0.1.0";

// Exit statuses of run_experiment and the CLI.
inline constexpr int kExitPass = 0;
inline constexpr int kExitFail = 1;
inline constexpr int kExitSchema = 2;
inline constexpr int kExitRuntime = 3;

// Invalid configuration; the message starts with "<file>:<line>:".
class SchemaError : public ArgumentError {
 public:
  using ArgumentError::ArgumentError;
};

// ---------------------------------------------------------------------------
// Scenario table.

struct ScenarioInfo {
  std::string name;
  std::string statement;
  std::vector<std::string> required;
  std::vector<std::string> optional;
  std::vector<std::pair<std::string, double>> tolerances;  // key, default
};

inline const std::vector<ScenarioInfo>& scenario_table() {
  static const std::vector<ScenarioInfo> table{
      {"dobrushin",
       "W1 between two particle clouds grows at most by exp(2Lt) along the N-body flow",
       {"kernel", "N", "t"},
       {"dt", "initial", "offset", "tolerances"},
       {{"ratio", 0.05}}},
      {"chaos",
       "W1 between the one-particle marginal and the mean-field solution decays like "
       "exp(2Lt) N^(-1/(d+4))",
       {"kernel", "N", "S", "t"},
       {"dt", "initial", "reference_points", "batches", "tolerances"},
       {{"slope_slack", 0.05}}},
      {"hierarchy-identity",
       "tensorized empirical measure = prefactor * m-particle marginal + diagonal defect",
       {"kernel", "N", "m", "S", "t"},
       {"dt", "initial", "test_functions", "tolerances"},
       {{"sigmas", 3.0}}},
      {"nested-stability",
       "nested W1 between two laws on measures grows at most by exp(2Lt) under the "
       "statistical flow",
       {"kernel", "members", "points", "t"},
       {"dt", "initial", "jitter", "tolerances"},
       {{"ratio", 0.05}}},
      {"qn-convergence",
       "laws of N-point empirical measures drawn from a law on measures approach it in "
       "nested W1 as N grows",
       {"member_densities", "N", "S"},
       {"atoms", "tolerances"},
       {{"min_decrease", 0.25}}},
      {"spohn-jacobian",
       "flow Jacobian blocks obey exp(Ls) + exp(3Ls)/(2n) entrywise and exp(2Ls)/n on "
       "averages; the Liouville identity holds along the flow",
       {"kernels", "N", "t", "trials"},
       {"dt", "tolerances"},
       {{"margin", 1e-3}, {"liouville", 1e-6}}},
      {"w1-selftest",
       "exact W1 agrees with brute force, the sorted 1-D formula, the dual lower bound and "
       "the tensorization inequality",
       {},
       {"instances", "tolerances"},
       {{"abs", 1e-9}}},
  };
  return table;
}

inline const ScenarioInfo* find_scenario(const std::string& name) {
  for (const auto& s : scenario_table())
    if (s.name == name) return &s;
  return nullptr;
}

// ---------------------------------------------------------------------------
// Configuration.

struct ExperimentConfig {
  std::string scenario;
  std::uint64_t seed = 0;
  std::string output;
  std::string description;
  std::vector<InteractionKernel> kernels;
  std::vector<std::size_t> n_list;
  std::vector<std::size_t> m_list;
  std::size_t samples = 0;
  std::vector<double> times;
  std::optional<double> dt;
  std::optional<DensitySpec> initial;
  std::vector<DensitySpec> member_densities;
  std::vector<double> offset;
  std::vector<std::string> test_functions;
  std::size_t members = 0, points = 0, atoms = 0, reference_points = 0, batches = 0;
  std::size_t trials = 0, instances = 0;
  double jitter = 0.3;
  std::map<std::string, double> tolerances;

  const InteractionKernel& kernel() const { return kernels.front(); }
  double tol(const std::string& key) const { return tolerances.at(key); }
  double step(const InteractionKernel& k) const { return dt.value_or(default_dt(k)); }
};

inline const std::vector<std::string>& hierarchy_test_functions() {
  static const std::vector<std::string> names{"cosine", "gaussian_pair", "poly_bump", "constant"};
  return names;
}

namespace detail {

inline std::string pointer_token(const std::string& key) {
  std::string out;
  for (char c : key) {
    if (c == '~') out += "~0";
    else if (c == '/') out += "~1";
    else out += c;
  }
  return out;
}

// Maps the JSON pointer of every value in a (valid) JSON text to the line on
// which the value starts.
class JsonLineScanner {
 public:
  explicit JsonLineScanner(const std::string& text) : s_(text) {}

  std::map<std::string, int> run() {
    value("");
    return lines_;
  }

 private:
  void ws() {
    while (i_ < s_.size() && (s_[i_] == ' ' || s_[i_] == '\t' || s_[i_] == '\r' || s_[i_] == '\n')) {
      if (s_[i_] == '\n') ++line_;
      ++i_;
    }
  }

  std::string string_token() {
    const std::size_t start = i_++;
    while (i_ < s_.size() && s_[i_] != '"') i_ += s_[i_] == '\\' ? 2 : 1;
    ++i_;
    return nlohmann::json::parse(s_.substr(start, i_ - start)).get<std::string>();
  }

  void value(const std::string& ptr) {
    ws();
    if (i_ >= s_.size()) return;
    lines_[ptr] = line_;
    const char c = s_[i_];
    if (c == '{' || c == '[') {
      const bool object = c == '{';
      ++i_;
      ws();
      if (s_[i_] == (object ? '}' : ']')) {
        ++i_;
        return;
      }
      for (std::size_t index = 0;; ++index) {
        ws();
        std::string child;
        if (object) {
          child = ptr + "/" + pointer_token(string_token());
          ws();
          ++i_;  // ':'
        } else {
          child = ptr + "/" + std::to_string(index);
        }
        value(child);
        ws();
        if (s_[i_++] != ',') return;
      }
    }
    if (c == '"') {
      string_token();
      return;
    }
    while (i_ < s_.size() && std::string_view(",]} \t\r\n").find(s_[i_]) == std::string_view::npos) ++i_;
  }

  const std::string& s_;
  std::size_t i_ = 0;
  int line_ = 1;
  std::map<std::string, int> lines_;
};

using nlohmann::json;

// Typed access to a parsed config; every failure names the file, line and
// JSON pointer of the offending value.
class ConfigReader {
 public:
  ConfigReader(const std::string& text, std::string name) : name_(std::move(name)) {
    try {
      root_ = json::parse(text);
    } catch (const json::parse_error& e) {
      const std::size_t upto = std::min<std::size_t>(e.byte, text.size());
      const int line = 1 + static_cast<int>(std::count(text.begin(), text.begin() + upto, '\n'));
      throw SchemaError(name_ + ":" + std::to_string(line) + ": invalid JSON: " + e.what());
    }
    lines_ = JsonLineScanner(text).run();
  }

  const json& root() const noexcept { return root_; }

  int line(std::string ptr) const {
    for (;;) {
      if (auto it = lines_.find(ptr); it != lines_.end()) return it->second;
      if (ptr.empty()) return 1;
      ptr.erase(ptr.rfind('/'));
    }
  }

  [[noreturn]] void fail(const std::string& ptr, const std::string& msg) const {
    throw SchemaError(name_ + ":" + std::to_string(line(ptr)) + ": " + (ptr.empty() ? "/" : ptr) +
                      ": " + msg);
  }

  void object(const json& v, const std::string& ptr) const {
    if (!v.is_object()) fail(ptr, "expected an object");
  }

  void keys(const json& v, const std::string& ptr, const std::set<std::string>& allowed,
            const std::set<std::string>& required) const {
    object(v, ptr);
    for (auto it = v.begin(); it != v.end(); ++it)
      if (!allowed.count(it.key())) fail(ptr + "/" + pointer_token(it.key()), "unknown key '" + it.key() + "'");
    for (const auto& k : required)
      if (!v.contains(k)) fail(ptr, "missing required key '" + k + "'");
  }

  double number(const json& v, const std::string& ptr) const {
    if (!v.is_number()) fail(ptr, "expected a number");
    const double x = v.get<double>();
    if (!std::isfinite(x)) fail(ptr, "expected a finite number");
    return x;
  }

  double positive(const json& v, const std::string& ptr) const {
    const double x = number(v, ptr);
    if (!(x > 0.0)) fail(ptr, "must be > 0");
    return x;
  }

  std::uint64_t integer(const json& v, const std::string& ptr) const {
    if (!v.is_number_integer() || (v.is_number_integer() && !v.is_number_unsigned() && v.get<std::int64_t>() < 0))
      fail(ptr, "expected a nonnegative integer");
    return v.get<std::uint64_t>();
  }

  std::size_t count(const json& v, const std::string& ptr, std::size_t min) const {
    const std::uint64_t x = integer(v, ptr);
    if (x < min) fail(ptr, "must be >= " + std::to_string(min));
    return static_cast<std::size_t>(x);
  }

  std::string string(const json& v, const std::string& ptr) const {
    if (!v.is_string()) fail(ptr, "expected a string");
    return v.get<std::string>();
  }

  const json& array(const json& v, const std::string& ptr) const {
    if (!v.is_array() || v.empty()) fail(ptr, "expected a non-empty array");
    return v;
  }

  // A number or a non-empty array of numbers.
  std::vector<double> numbers(const json& v, const std::string& ptr) const {
    if (v.is_number()) return {number(v, ptr)};
    std::vector<double> out;
    for (std::size_t i = 0; i < array(v, ptr).size(); ++i) out.push_back(number(v[i], ptr + "/" + std::to_string(i)));
    return out;
  }

  std::vector<std::size_t> counts(const json& v, const std::string& ptr, std::size_t min) const {
    if (v.is_number()) return {count(v, ptr, min)};
    std::vector<std::size_t> out;
    for (std::size_t i = 0; i < array(v, ptr).size(); ++i)
      out.push_back(count(v[i], ptr + "/" + std::to_string(i), min));
    return out;
  }

  InteractionKernel kernel(const json& v, const std::string& ptr) const {
    object(v, ptr);
    if (!v.contains("type")) fail(ptr, "missing required key 'type'");
    const std::string type = string(v["type"], ptr + "/type");
    auto dim_of = [&](const char* key) {
      return v.contains(key) ? static_cast<int>(count(v[key], ptr + "/" + key, 1)) : 1;
    };
    try {
      if (type == "zero") {
        keys(v, ptr, {"type", "dim"}, {});
        return InteractionKernel::zero(dim_of("dim"));
      }
      if (type == "linear") {
        keys(v, ptr, {"type", "c", "dim"}, {"c"});
        return InteractionKernel::linear(number(v["c"], ptr + "/c"), dim_of("dim"));
      }
      if (type == "harmonic_vlasov") {
        keys(v, ptr, {"type", "spatial_dim"}, {});
        return InteractionKernel::harmonic_vlasov(dim_of("spatial_dim"));
      }
      if (type == "smoothed_vlasov") {
        keys(v, ptr, {"type", "spatial_dim", "potential", "amplitude", "epsilon"}, {"epsilon"});
        PotentialKind pot = PotentialKind::kGaussian;
        if (v.contains("potential")) {
          const std::string p = string(v["potential"], ptr + "/potential");
          if (p == "plummer") pot = PotentialKind::kPlummer;
          else if (p != "gaussian") fail(ptr + "/potential", "expected 'gaussian' or 'plummer'");
        }
        const double amp = v.contains("amplitude") ? number(v["amplitude"], ptr + "/amplitude") : 1.0;
        return InteractionKernel::smoothed_vlasov(dim_of("spatial_dim"), pot, amp,
                                                  positive(v["epsilon"], ptr + "/epsilon"));
      }
      if (type == "smoothed_biot_savart") {
        keys(v, ptr, {"type", "epsilon"}, {"epsilon"});
        return InteractionKernel::smoothed_biot_savart(positive(v["epsilon"], ptr + "/epsilon"));
      }
    } catch (const SchemaError&) {
      throw;
    } catch (const ArgumentError& e) {
      fail(ptr, e.what());
    }
    fail(ptr + "/type", "unknown kernel type '" + type +
                            "' (zero, linear, harmonic_vlasov, smoothed_vlasov, smoothed_biot_savart)");
  }

  GaussianSpec gaussian(const json& v, const std::string& ptr, std::set<std::string> allowed) const {
    allowed.insert({"mean", "cov", "sigma"});
    keys(v, ptr, allowed, {"mean"});
    GaussianSpec g;
    g.mean = numbers(v["mean"], ptr + "/mean");
    const std::size_t d = g.mean.size();
    if (v.contains("cov") && v.contains("sigma")) fail(ptr, "give either 'cov' or 'sigma', not both");
    if (v.contains("cov")) {
      g.cov = numbers(v["cov"], ptr + "/cov");
      if (g.cov.size() != d * d) fail(ptr + "/cov", "expected " + std::to_string(d * d) + " entries (row-major)");
    } else {
      const double s = v.contains("sigma") ? positive(v["sigma"], ptr + "/sigma") : 1.0;
      g.cov.assign(d * d, 0.0);
      for (std::size_t i = 0; i < d; ++i) g.cov[i * d + i] = s * s;
    }
    return g;
  }

  DensitySpec density(const json& v, const std::string& ptr) const {
    object(v, ptr);
    if (!v.contains("type")) fail(ptr, "missing required key 'type'");
    const std::string type = string(v["type"], ptr + "/type");
    try {
      if (type == "gaussian") {
        auto g = gaussian(v, ptr, {"type"});
        return DensitySpec::gaussian(std::move(g.mean), std::move(g.cov));
      }
      if (type == "mixture") {
        keys(v, ptr, {"type", "components"}, {"components"});
        std::vector<MixtureComponent> comps;
        const auto& arr = array(v["components"], ptr + "/components");
        for (std::size_t i = 0; i < arr.size(); ++i) {
          const std::string cp = ptr + "/components/" + std::to_string(i);
          auto g = gaussian(arr[i], cp, {"weight"});
          if (!arr[i].contains("weight")) fail(cp, "missing required key 'weight'");
          comps.push_back({positive(arr[i]["weight"], cp + "/weight"), std::move(g)});
        }
        return DensitySpec::mixture(std::move(comps));
      }
      if (type == "uniform") {
        keys(v, ptr, {"type", "lo", "hi"}, {"lo", "hi"});
        return DensitySpec::uniform(numbers(v["lo"], ptr + "/lo"), numbers(v["hi"], ptr + "/hi"));
      }
    } catch (const SchemaError&) {
      throw;
    } catch (const ArgumentError& e) {
      fail(ptr, e.what());
    }
    fail(ptr + "/type", "unknown density type '" + type + "' (gaussian, mixture, uniform)");
  }

 private:
  std::string name_;
  json root_;
  std::map<std::string, int> lines_;
};

}  // namespace detail

// Parses and validates a config. `name` prefixes error messages.
inline ExperimentConfig parse_config(const std::string& text, const std::string& name) {
  const detail::ConfigReader r(text, name);
  const auto& root = r.root();
  r.object(root, "");
  if (!root.contains("scenario")) r.fail("", "missing required key 'scenario'");
  ExperimentConfig c;
  c.scenario = r.string(root["scenario"], "/scenario");
  const ScenarioInfo* info = find_scenario(c.scenario);
  if (!info) r.fail("/scenario", "unknown scenario '" + c.scenario + "' (see `meanfield-lab list`)");

  std::set<std::string> allowed{"scenario", "seed", "output", "description"};
  std::set<std::string> required{"seed"};
  allowed.insert(info->required.begin(), info->required.end());
  allowed.insert(info->optional.begin(), info->optional.end());
  required.insert(info->required.begin(), info->required.end());
  r.keys(root, "", allowed, required);

  for (const auto& [k, d] : info->tolerances) c.tolerances[k] = d;

  for (auto it = root.begin(); it != root.end(); ++it) {
    const std::string& key = it.key();
    const auto& v = it.value();
    const std::string ptr = "/" + detail::pointer_token(key);
    if (key == "scenario") continue;
    if (key == "seed") c.seed = r.integer(v, ptr);
    else if (key == "output") c.output = r.string(v, ptr);
    else if (key == "description") c.description = r.string(v, ptr);
    else if (key == "kernel") c.kernels = {r.kernel(v, ptr)};
    else if (key == "kernels") {
      for (std::size_t i = 0; i < r.array(v, ptr).size(); ++i)
        c.kernels.push_back(r.kernel(v[i], ptr + "/" + std::to_string(i)));
    } else if (key == "N") c.n_list = r.counts(v, ptr, 1);
    else if (key == "m") c.m_list = r.counts(v, ptr, 1);
    else if (key == "S") c.samples = r.count(v, ptr, 1);
    else if (key == "t") c.times = r.numbers(v, ptr);
    else if (key == "dt") c.dt = r.positive(v, ptr);
    else if (key == "initial") c.initial = r.density(v, ptr);
    else if (key == "member_densities") {
      for (std::size_t i = 0; i < r.array(v, ptr).size(); ++i)
        c.member_densities.push_back(r.density(v[i], ptr + "/" + std::to_string(i)));
    } else if (key == "offset") c.offset = r.numbers(v, ptr);
    else if (key == "test_functions") {
      const auto& names = hierarchy_test_functions();
      for (std::size_t i = 0; i < r.array(v, ptr).size(); ++i) {
        const std::string p = ptr + "/" + std::to_string(i);
        const std::string s = r.string(v[i], p);
        if (std::find(names.begin(), names.end(), s) == names.end())
          r.fail(p, "unknown test function '" + s + "' (cosine, gaussian_pair, poly_bump, constant)");
        c.test_functions.push_back(s);
      }
    } else if (key == "members") c.members = r.count(v, ptr, 1);
    else if (key == "points") c.points = r.count(v, ptr, 1);
    else if (key == "atoms") c.atoms = r.count(v, ptr, 1);
    else if (key == "reference_points") c.reference_points = r.count(v, ptr, 1);
    else if (key == "batches") c.batches = r.count(v, ptr, 2);
    else if (key == "trials") c.trials = r.count(v, ptr, 1);
    else if (key == "instances") c.instances = r.count(v, ptr, 1);
    else if (key == "jitter") {
      c.jitter = r.number(v, ptr);
      if (c.jitter < 0.0) r.fail(ptr, "must be >= 0");
    } else if (key == "tolerances") {
      r.object(v, ptr);
      for (auto t = v.begin(); t != v.end(); ++t) {
        const std::string tp = ptr + "/" + detail::pointer_token(t.key());
        if (!c.tolerances.count(t.key())) r.fail(tp, "unknown tolerance '" + t.key() + "' for scenario '" + c.scenario + "'");
        c.tolerances[t.key()] = r.number(t.value(), tp);
        if (c.tolerances[t.key()] < 0.0) r.fail(tp, "must be >= 0");
      }
    }
  }

  // Cross-field checks.
  if (!c.kernels.empty()) {
    const auto d = static_cast<std::size_t>(c.kernel().dim());
    if (c.initial && c.initial->dim() != d)
      r.fail("/initial", "dimension " + std::to_string(c.initial->dim()) + " does not match kernel dimension " +
                             std::to_string(d));
    if (!c.offset.empty() && c.offset.size() != 1 && c.offset.size() != d)
      r.fail("/offset", "expected a number or " + std::to_string(d) + " entries");
  }
  const auto distinct_n = std::set<std::size_t>(c.n_list.begin(), c.n_list.end()).size();
  if ((c.scenario == "chaos" || c.scenario == "qn-convergence") && distinct_n < 2)
    r.fail("/N", "needs at least two distinct values");
  if (c.scenario == "hierarchy-identity") {
    if (c.times.size() != 1) r.fail("/t", "expects a single time");
    const std::size_t n_min = *std::min_element(c.n_list.begin(), c.n_list.end());
    for (std::size_t i = 0; i < c.m_list.size(); ++i)
      if (c.m_list[i] > n_min) r.fail("/m/" + std::to_string(i), "m must not exceed the smallest N");
    for (std::size_t i = 0; i < c.test_functions.size(); ++i)
      if (c.test_functions[i] == "gaussian_pair" &&
          std::any_of(c.m_list.begin(), c.m_list.end(), [](std::size_t m) { return m != 2; }))
        r.fail("/test_functions/" + std::to_string(i), "gaussian_pair needs every m to be 2");
  }
  if (c.scenario == "spohn-jacobian")
    for (std::size_t i = 0; i < c.n_list.size(); ++i)
      if (c.n_list[i] < 2) r.fail("/N/" + std::to_string(i), "must be >= 2");
  if (c.scenario == "qn-convergence")
    for (std::size_t i = 1; i < c.member_densities.size(); ++i)
      if (c.member_densities[i].dim() != c.member_densities[0].dim())
        r.fail("/member_densities/" + std::to_string(i), "members must share dimension");
  if (c.output.empty()) c.output = "results/" + c.scenario;
  return c;
}

// ---------------------------------------------------------------------------
// Scenarios.

struct OutputFile {
  std::string name;
  std::string content;
};

struct ScenarioResult {
  bool pass = false;
  std::vector<OutputFile> files;
  nlohmann::json summary;
};

namespace detail {

inline std::string flag(bool b) { return b ? "1" : "0"; }

inline DensitySpec initial_or_standard(const ExperimentConfig& c) {
  return c.initial ? *c.initial : DensitySpec::standard_gaussian(static_cast<std::size_t>(c.kernel().dim()));
}

inline ParticleConfiguration draw(const DensitySpec& f, std::size_t n, std::uint64_t seed, Stream s,
                                  std::uint64_t index) {
  Rng rng = make_rng(seed, s, index);
  return sample_points(f, n, rng);
}

// Least-squares slope of log y against log x.
inline double loglog_slope(const std::vector<double>& x, const std::vector<double>& y) {
  const std::size_t n = x.size();
  double mx = 0, my = 0;
  for (std::size_t i = 0; i < n; ++i) {
    mx += std::log(x[i]);
    my += std::log(y[i]);
  }
  mx /= static_cast<double>(n);
  my /= static_cast<double>(n);
  double sxy = 0, sxx = 0;
  for (std::size_t i = 0; i < n; ++i) {
    const double dx = std::log(x[i]) - mx;
    sxy += dx * (std::log(y[i]) - my);
    sxx += dx * dx;
  }
  return sxy / sxx;
}

inline ScenarioResult run_dobrushin(const ExperimentConfig& c) {
  const auto& k = c.kernel();
  const std::size_t d = static_cast<std::size_t>(k.dim());
  const DensitySpec f = initial_or_standard(c);
  std::vector<double> h(d, 0.0);
  if (c.offset.size() == d) h = c.offset;
  else h[0] = c.offset.empty() ? 0.1 : c.offset[0];
  const double ratio = c.tol("ratio");

  CsvTable table({"N", "t", "dist0", "dist", "bound", "pass"});
  bool pass = true;
  for (std::size_t i = 0; i < c.n_list.size(); ++i) {
    const std::size_t n = c.n_list[i];
    const auto mu0 = draw(f, n, c.seed, Stream::kSamples, 2 * i);
    const auto nu0 = DiscreteMeasure::empirical(draw(f, n, c.seed, Stream::kSamples, 2 * i + 1)).translated(h).support();
    const double dist0 = w1(DiscreteMeasure::empirical(mu0), DiscreteMeasure::empirical(nu0));
    for (double t : c.times) {
      const FlowParams params{c.step(k), t, Method::kRK4};
      const double dist = w1(DiscreteMeasure::empirical(integrate_flow(k, mu0, params)),
                             DiscreteMeasure::empirical(integrate_flow(k, nu0, params)));
      const double bound = std::exp(2.0 * k.lipschitz() * std::abs(t)) * dist0;
      const bool ok = dist <= bound * (1.0 + ratio);
      pass = pass && ok;
      table.add_row({std::to_string(n), format_double(t), format_double(dist0), format_double(dist),
                     format_double(bound), flag(ok)});
    }
  }
  ScenarioResult r;
  r.pass = pass;
  r.files.push_back({"dobrushin.csv", table.str()});
  r.summary = {{"kernel", k.name()}, {"ratio_tolerance", ratio}};
  return r;
}

// Mean-field reference: the initial density quantized (d = 1) or sampled,
// propagated as a weighted particle system.
inline DiscreteMeasure chaos_reference(const ExperimentConfig& c, const DensitySpec& f, std::size_t points,
                                       double t, std::uint64_t index) {
  const auto& k = c.kernel();
  const DiscreteMeasure start = f.dim() == 1 ? quantize_1d(f, points)
                                             : DiscreteMeasure::empirical(draw(f, points, c.seed, Stream::kInstances, index));
  return integrate_measure_flow(k, start, FlowParams{c.step(k), t, Method::kRK4});
}

inline double cloud_distance(const DiscreteMeasure& a, const DiscreteMeasure& b, std::uint64_t seed) {
  if (a.dim() == 1) return w1_sorted_1d(a, b);
  const auto side = static_cast<std::size_t>(std::sqrt(static_cast<double>(kTransportCapacity)));
  return w1(meanfield::detail::subsample_uniform(a, side, seed),
            meanfield::detail::subsample_uniform(b, side, seed + 1));
}

inline ScenarioResult run_chaos(const ExperimentConfig& c) {
  const auto& k = c.kernel();
  const double d = static_cast<double>(k.dim());
  const DensitySpec f = initial_or_standard(c);
  const double rate = 1.0 / (d + 4.0);
  const std::size_t n_max = *std::max_element(c.n_list.begin(), c.n_list.end());
  const std::size_t n_ref = c.reference_points ? c.reference_points : 64 * n_max;
  const std::size_t batches = c.batches ? c.batches : 16;
  require(batches <= c.samples, "chaos: batches must not exceed S");
  std::vector<std::size_t> ns = c.n_list;
  std::sort(ns.begin(), ns.end());
  ns.erase(std::unique(ns.begin(), ns.end()), ns.end());

  CsvTable table({"N", "S", "t", "distance", "stderr", "bound_rhs", "slope"});
  nlohmann::json per_time = nlohmann::json::array();
  bool pass = true;
  for (std::size_t ti = 0; ti < c.times.size(); ++ti) {
    const double t = c.times[ti];
    const DiscreteMeasure ref = chaos_reference(c, f, n_ref, t, 2 * ti);
    const double proxy_error = cloud_distance(ref, chaos_reference(c, f, 2 * n_ref, t, 2 * ti + 1), c.seed);
    std::vector<double> dist(ns.size()), err(ns.size());
    for (std::size_t i = 0; i < ns.size(); ++i) {
      const std::uint64_t s = child_seed(c.seed, Stream::kSamples, ti * ns.size() + i);
      const Ensemble ens = propagate_ensemble(sample_product_ensemble(f, ns[i], c.samples, s), k,
                                              FlowParams{c.step(k), t, Method::kRK4});
      dist[i] = chaoticity_distance(ens, ref, s);
      err[i] = chaoticity_batches(ens, ref, batches, s).std_error;
    }
    const double growth = std::exp(2.0 * k.lipschitz() * std::abs(t));
    const double constant = dist[0] / (growth * std::pow(static_cast<double>(ns[0]), -rate));
    std::vector<double> xs(ns.begin(), ns.end());
    const bool positive = std::all_of(dist.begin(), dist.end(), [](double x) { return x > 0.0; });
    const double slope = positive ? loglog_slope(xs, dist) : std::numeric_limits<double>::quiet_NaN();
    bool ok = positive && slope <= -rate + c.tol("slope_slack");
    for (std::size_t i = 0; i < ns.size(); ++i) {
      const double bound = constant * growth * std::pow(static_cast<double>(ns[i]), -rate);
      // The smallest N calibrates the constant; allow for its rounding.
      ok = ok && dist[i] <= bound * (1.0 + 1e-12);
      table.add_row({std::to_string(ns[i]), std::to_string(c.samples), format_double(t), format_double(dist[i]),
                     format_double(err[i]), format_double(bound), format_double(slope)});
    }
    pass = pass && ok;
    per_time.push_back({{"t", t},
                        {"constant", constant},
                        {"slope", positive ? nlohmann::json(slope) : nlohmann::json(nullptr)},
                        {"slope_limit", -rate + c.tol("slope_slack")},
                        {"reference_points", n_ref},
                        {"proxy_error", proxy_error},
                        {"pass", ok}});
  }
  ScenarioResult r;
  r.pass = pass;
  r.files.push_back({"chaos.csv", table.str()});
  r.summary = {{"kernel", k.name()}, {"rate", rate}, {"times", per_time}};
  return r;
}

inline TestFunctionM hierarchy_phi(const std::string& name, std::size_t dim, std::size_t m) {
  const int arity = static_cast<int>(m);
  if (name == "cosine") {
    std::vector<double> freq(dim);
    for (std::size_t i = 0; i < dim; ++i) freq[i] = (i % 2 ? -0.6 : 0.9);
    return TestFunctionM::cosine_product(freq, arity);
  }
  if (name == "gaussian_pair") return TestFunctionM::gaussian_pair(dim);
  if (name == "poly_bump") return TestFunctionM::poly_bump(std::vector<double>(dim, 0.0), 2.5, arity);
  return TestFunctionM::constant(dim, arity);
}

inline ScenarioResult run_hierarchy(const ExperimentConfig& c) {
  const auto& k = c.kernel();
  const std::size_t d = static_cast<std::size_t>(k.dim());
  const DensitySpec f = initial_or_standard(c);
  const double t = c.times.front();
  const double sigmas = c.tol("sigmas");
  const std::vector<std::string> phis =
      c.test_functions.empty() ? std::vector<std::string>{"cosine", "gaussian_pair", "poly_bump"} : c.test_functions;

  CsvTable table({"N", "m", "phi_id", "lhs", "rhs", "defect", "sigma"});
  nlohmann::json checks = nlohmann::json::array();
  bool pass = true;
  for (std::size_t i = 0; i < c.n_list.size(); ++i) {
    const std::size_t n = c.n_list[i];
    const Ensemble ens = propagate_ensemble(
        sample_product_ensemble(f, n, c.samples, child_seed(c.seed, Stream::kSamples, i)), k,
        FlowParams{c.step(k), t, Method::kRK4});
    for (std::size_t m : c.m_list) {
      const auto pf = combinatorial_prefactor(n, m);
      for (const auto& id : phis) {
        if (id == "gaussian_pair" && m != 2) continue;
        const TestFunctionM phi = hierarchy_phi(id, d, m);
        const auto lhs = tensorized_empirical_pair(ens, phi);
        const auto marg = marginal_pair(ens, phi);
        const auto defect = defect_term(ens, phi);
        const double rhs = pf.prefactor * marg.value + defect.value;
        const double sigma = std::sqrt(lhs.std_error * lhs.std_error +
                                       pf.prefactor * pf.prefactor * marg.std_error * marg.std_error +
                                       defect.std_error * defect.std_error);
        const double gap = std::abs(lhs.value - rhs);
        // Exact per-sample sums agree only up to rounding.
        const bool ok = gap <= sigmas * sigma + 1e-12 * std::max(1.0, std::abs(lhs.value));
        pass = pass && ok;
        table.add_row({std::to_string(n), std::to_string(m), id, format_double(lhs.value), format_double(rhs),
                       format_double(defect.value), format_double(sigma)});
        checks.push_back({{"N", n}, {"m", m}, {"phi_id", id}, {"prefactor", pf.prefactor},
                          {"defect_bound", pf.defect_bound}, {"gap", gap}, {"pass", ok}});
      }
    }
  }
  ScenarioResult r;
  r.pass = pass;
  r.files.push_back({"hierarchy_identity.csv", table.str()});
  r.summary = {{"kernel", k.name()}, {"t", t}, {"sigmas", sigmas}, {"checks", checks}};
  return r;
}

inline DensitySpec default_mixture(std::size_t d) {
  std::vector<double> cov(d * d, 0.0), left(d, 0.0), right(d, 0.0);
  for (std::size_t i = 0; i < d; ++i) cov[i * d + i] = 0.3;
  left[0] = -1.0;
  right[0] = 1.0;
  return DensitySpec::mixture({{0.5, {left, cov}}, {0.5, {right, cov}}});
}

inline ScenarioResult run_nested_stability(const ExperimentConfig& c) {
  const auto& k = c.kernel();
  const std::size_t d = static_cast<std::size_t>(k.dim());
  const DensitySpec base = c.initial ? *c.initial : default_mixture(d);
  const MeasureEnsemble p = random_mixture_ensemble(base, c.members, c.points, c.jitter,
                                                    child_seed(c.seed, Stream::kMembers, 0));
  const MeasureEnsemble q = random_mixture_ensemble(base, c.members, c.points, c.jitter,
                                                    child_seed(c.seed, Stream::kMembers, 1));
  CsvTable table({"t", "dist0", "dist_t", "bound", "tol", "pass"});
  nlohmann::json reports = nlohmann::json::array();
  bool pass = true;
  for (double t : c.times) {
    const auto rep = nested_stability_check(p, q, k, t, c.step(k), c.tol("ratio"));
    pass = pass && rep.pass;
    table.add_row({format_double(t), format_double(rep.dist0), format_double(rep.dist_t), format_double(rep.bound),
                   format_double(rep.tol), flag(rep.pass)});
    reports.push_back({{"t", t}, {"dist0", rep.dist0}, {"dist_t", rep.dist_t}, {"bound", rep.bound},
                       {"tol", rep.tol}, {"pass", rep.pass}});
  }
  ScenarioResult r;
  r.pass = pass;
  r.files.push_back({"nested_stability.csv", table.str()});
  r.files.push_back({"stability_report.json", reports.dump(2) + "\n"});
  for (const auto& [tag, ens] : {std::pair{"ensemble_p", &p}, std::pair{"ensemble_q", &q}}) {
    nlohmann::json manifest{{"seed", ens->seed}, {"time", ens->time}, {"dim", ens->dim()},
                            {"members", nlohmann::json::array()}};
    for (std::size_t i = 0; i < ens->size(); ++i) {
      char file[32];
      std::snprintf(file, sizeof file, "member_%04zu.csv", i);
      r.files.push_back({std::string(tag) + "/" + file, point_cloud_csv(ens->members[i])});
      manifest["members"].push_back({{"file", file}, {"weight", ens->weights[i]}});
    }
    r.files.push_back({std::string(tag) + "/manifest.json", manifest.dump(2) + "\n"});
  }
  r.summary = {{"kernel", k.name()}, {"members", c.members}, {"points", c.points}};
  return r;
}

inline ScenarioResult run_qn_convergence(const ExperimentConfig& c) {
  const std::size_t atoms = c.atoms ? c.atoms : 256;
  std::vector<DiscreteMeasure> members;
  for (std::size_t i = 0; i < c.member_densities.size(); ++i) {
    const auto& f = c.member_densities[i];
    members.push_back(f.dim() == 1 ? quantize_1d(f, atoms)
                                   : DiscreteMeasure::empirical(draw(f, atoms, c.seed, Stream::kMembers, i)));
  }
  const MeasureEnsemble p = MeasureEnsemble::uniform(std::move(members), c.seed);
  std::vector<std::size_t> ns = c.n_list;
  std::sort(ns.begin(), ns.end());
  ns.erase(std::unique(ns.begin(), ns.end()), ns.end());

  CsvTable table({"N", "S", "draws", "nested_distance"});
  std::vector<double> dist;
  for (std::size_t n : ns) {
    // The same seed at every N couples the member assignments across scales.
    const Ensemble ens = qn_projection(p, n, c.samples, c.seed);
    dist.push_back(nested_w1(empirical_ensemble(ens), p));
    table.add_row({std::to_string(n), std::to_string(c.samples), std::to_string(ens.size()),
                   format_double(dist.back())});
  }
  const double decrease = 1.0 - dist.back() / dist.front();
  ScenarioResult r;
  r.pass = dist.back() <= (1.0 - c.tol("min_decrease")) * dist.front();
  r.files.push_back({"qn_convergence.csv", table.str()});
  r.summary = {{"members", p.size()}, {"atoms", atoms}, {"relative_decrease", decrease},
               {"min_decrease", c.tol("min_decrease")}};
  return r;
}

inline ScenarioResult run_spohn_jacobian(const ExperimentConfig& c) {
  const std::size_t trials = c.trials;
  CsvTable table({"kernel", "n", "s", "worst_ratio", "alpha_excess", "beta_excess", "liouville_residual", "pass"});
  nlohmann::json reports = nlohmann::json::array();
  bool pass = true;
  std::uint64_t index = 0;
  for (const auto& k : c.kernels) {
    const std::size_t d = static_cast<std::size_t>(k.dim());
    for (std::size_t n : c.n_list) {
      for (double s : c.times) {
        const auto rep = jacobian_bound_report(k, n, s, static_cast<int>(trials),
                                               child_seed(c.seed, Stream::kTrials, index), c.tol("margin"), c.dt);
        const ParticleConfiguration z = draw(DensitySpec::standard_gaussian(d), n, c.seed, Stream::kInstances, index);
        const auto lv = liouville_identity_check(k, z, bound_test_functions(d, n).front(), s, c.dt);
        ++index;
        const bool ok = rep.pass && lv.residual <= c.tol("liouville");
        pass = pass && ok;
        table.add_row({k.name(), std::to_string(n), format_double(s), format_double(rep.worst_ratio),
                       format_double(rep.worst_alpha_excess), format_double(rep.worst_beta_excess),
                       format_double(lv.residual), flag(ok)});
        reports.push_back({{"kernel", k.name()}, {"n", n}, {"s", s}, {"worst_ratio", rep.worst_ratio}, {"pass", ok}});
      }
    }
  }
  ScenarioResult r;
  r.pass = pass;
  r.files.push_back({"spohn_jacobian.csv", table.str()});
  r.files.push_back({"spohn_report.json", reports.dump(2) + "\n"});
  r.summary = {{"trials", trials}, {"margin", c.tol("margin")}, {"liouville_tolerance", c.tol("liouville")},
               {"block_norm", "spectral"}};
  return r;
}

inline DiscreteMeasure random_measure(Rng& rng, std::size_t dim, std::size_t n, bool uniform) {
  std::normal_distribution<double> g(0.0, 1.0);
  std::uniform_real_distribution<double> u(0.05, 1.0);
  std::vector<double> coords(dim * n), w(n, 1.0 / static_cast<double>(n));
  for (double& x : coords) x = g(rng);
  if (!uniform) {
    for (double& x : w) x = u(rng);
    w = normalized(std::move(w));
  }
  return DiscreteMeasure(dim, std::move(coords), std::move(w));
}

inline ScenarioResult run_w1_selftest(const ExperimentConfig& c) {
  const std::size_t count = c.instances ? c.instances : 200;
  const double tol = c.tol("abs");
  struct Check {
    std::string name;
    std::size_t instances;
    std::vector<double> errors;
  };
  std::vector<Check> checks{{"assignment_vs_brute_force", count, std::vector<double>(count)},
                            {"simplex_vs_sorted_1d", count, std::vector<double>(count)},
                            {"dual_lower_bound", count, std::vector<double>(count)},
                            {"two_dirac_dual_gap", count, std::vector<double>(count)},
                            {"tensorization", count / 2 ? count / 2 : 1, std::vector<double>(count / 2 ? count / 2 : 1)}};
  parallel_for(count, [&](std::size_t i) {
    Rng rng = make_rng(c.seed, Stream::kInstances, i);
    std::uniform_int_distribution<std::size_t> small(1, 7), mid(1, 64);
    const std::size_t dim = 1 + (i % 2);
    const std::size_t n = small(rng);
    const auto a = random_measure(rng, dim, n, true), b = random_measure(rng, dim, n, true);
    checks[0].errors[i] = std::abs(w1_exact(a, b).distance - w1_brute_force(a, b));

    const auto p = random_measure(rng, 1, mid(rng), false), q = random_measure(rng, 1, mid(rng), false);
    checks[1].errors[i] = std::abs(w1_exact(p, q).distance - w1_sorted_1d(p, q));

    const auto x = random_measure(rng, dim, small(rng), false), y = random_measure(rng, dim, small(rng), false);
    checks[2].errors[i] = std::max(0.0, w1_dual_lb(x, y, 32, rng()) - w1_exact(x, y).distance);

    const auto da = random_measure(rng, dim, 1, true), db = random_measure(rng, dim, 1, true);
    checks[3].errors[i] = std::abs(w1_exact(da, db).distance - w1_dual_lb(da, db, 32, rng()));

    if (i < checks[4].instances) {
      std::uniform_int_distribution<std::size_t> support(1, 5);
      std::uniform_int_distribution<int> power(1, 3);
      const auto mu = random_measure(rng, dim, support(rng), false), nu = random_measure(rng, dim, support(rng), false);
      const int m = power(rng);
      checks[4].errors[i] = std::max(0.0, w1(tensor_power(mu, m), tensor_power(nu, m)) - m * w1(mu, nu));
    }
  });

  CsvTable table({"check", "instances", "max_error", "pass"});
  bool pass = true;
  for (const auto& ch : checks) {
    const double worst = *std::max_element(ch.errors.begin(), ch.errors.begin() + static_cast<std::ptrdiff_t>(ch.instances));
    const bool ok = worst <= tol;
    pass = pass && ok;
    table.add_row({ch.name, std::to_string(ch.instances), format_double(worst), flag(ok)});
  }
  ScenarioResult r;
  r.pass = pass;
  r.files.push_back({"w1_selftest.csv", table.str()});
  r.summary = {{"tolerance", tol}};
  return r;
}

}  // namespace detail

// Runs the scenario in memory; nothing is written.
inline ScenarioResult run_scenario(const ExperimentConfig& c) {
  if (c.scenario == "dobrushin") return detail::run_dobrushin(c);
  if (c.scenario == "chaos") return detail::run_chaos(c);
  if (c.scenario == "hierarchy-identity") return detail::run_hierarchy(c);
  if (c.scenario == "nested-stability") return detail::run_nested_stability(c);
  if (c.scenario == "qn-convergence") return detail::run_qn_convergence(c);
  if (c.scenario == "spohn-jacobian") return detail::run_spohn_jacobian(c);
  if (c.scenario == "w1-selftest") return detail::run_w1_selftest(c);
  throw ArgumentError("unknown scenario '" + c.scenario + "'");
}

// ---------------------------------------------------------------------------
// Running from a config file.

inline std::uint64_t fnv1a64(const std::string& bytes) {
  std::uint64_t h = 14695981039346656037ULL;
  for (unsigned char ch : bytes) {
    h ^= ch;
    h *= 1099511628211ULL;
  }
  return h;
}

inline std::string utc_timestamp() {
  const std::time_t now = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  std::tm tm{};
  gmtime_r(&now, &tm);
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

struct RunOutcome {
  int exit_code = kExitPass;
  std::string message;
  std::filesystem::path output_dir;
};

// Parses `config_text`, runs the scenario and writes its files, summary.json
// and run_manifest.json into the output directory (`output_override` wins
// over the config's "output"). Only the manifest carries a timestamp.
inline RunOutcome run_experiment(const std::string& config_text, const std::string& config_name,
                                 const std::optional<std::filesystem::path>& output_override = std::nullopt) {
  RunOutcome out;
  ExperimentConfig cfg;
  try {
    cfg = parse_config(config_text, config_name);
  } catch (const ArgumentError& e) {
    out.exit_code = kExitSchema;
    out.message = e.what();
    return out;
  }
  out.output_dir = output_override ? *output_override : std::filesystem::path(cfg.output);

  ScenarioResult res;
  try {
    res = run_scenario(cfg);
  } catch (const CapacityError& e) {
    out.exit_code = kExitRuntime;
    out.message = cfg.scenario + ": capacity: " + e.what();
    return out;
  } catch (const NumericalError& e) {
    out.exit_code = kExitRuntime;
    out.message = cfg.scenario + ": numerical: " + e.what();
    return out;
  } catch (const Error& e) {
    out.exit_code = kExitSchema;
    out.message = cfg.scenario + ": invalid input: " + e.what();
    return out;
  }

  nlohmann::json summary{{"scenario", cfg.scenario}, {"seed", cfg.seed}, {"pass", res.pass},
                         {"details", res.summary}};
  res.files.push_back({"summary.json", summary.dump(2) + "\n"});
  nlohmann::json files = nlohmann::json::array();
  try {
    for (const auto& f : res.files) {
      write_text(out.output_dir / f.name, f.content);
      files.push_back(f.name);
    }
    char hash[24];
    std::snprintf(hash, sizeof hash, "%016llx", static_cast<unsigned long long>(fnv1a64(config_text)));
    nlohmann::json manifest{
        {"tool", "meanfield-lab"},
        {"version", kVersion},
        {"scenario", cfg.scenario},
        {"config", config_name},
        {"config_hash", std::string("fnv1a64:") + hash},
        {"seed", cfg.seed},
        {"timestamp", utc_timestamp()},
        {"threads", thread_count()},
        {"versions",
         {{"compiler", __VERSION__},
          {"nlohmann_json", std::to_string(NLOHMANN_JSON_VERSION_MAJOR) + "." +
                                std::to_string(NLOHMANN_JSON_VERSION_MINOR) + "." +
                                std::to_string(NLOHMANN_JSON_VERSION_PATCH)},
          {"eigen", std::to_string(EIGEN_WORLD_VERSION) + "." + std::to_string(EIGEN_MAJOR_VERSION) + "." +
                        std::to_string(EIGEN_MINOR_VERSION)},
          {"boost", BOOST_LIB_VERSION}}},
        {"outputs", files},
        {"pass", res.pass}};
    write_text(out.output_dir / "run_manifest.json", manifest.dump(2) + "\n");
  } catch (const std::exception& e) {
    out.exit_code = kExitRuntime;
    out.message = cfg.scenario + ": output: " + e.what();
    return out;
  }
  out.exit_code = res.pass ? kExitPass : kExitFail;
  out.message = cfg.scenario + ": " + (res.pass ? "PASS" : "FAIL");
  return out;
}

}  // namespace meanfield::lab

#endif  // MEANFIELD_EXPERIMENT_HPP
