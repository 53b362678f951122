// meanfield-lab: runs experiment configs, lists scenarios, computes W1
// between point-cloud files.

#include <cstdio>
#include <filesystem>
#include <iostream>
#include <optional>
#include <string>

#include <CLI11.hpp>

#include "meanfield/meanfield.hpp"

namespace mf = meanfield;
namespace lab = meanfield::lab;

namespace {

int cmd_list() {
  std::size_t width = 0;
  for (const auto& s : lab::scenario_table()) width = std::max(width, s.name.size());
  for (const auto& s : lab::scenario_table())
    std::cout << s.name << std::string(width + 2 - s.name.size(), ' ') << s.statement << "\n";
  return lab::kExitPass;
}

int cmd_run(const std::string& config, const std::string& output) {
  std::string text;
  try {
    text = mf::read_text(config);
  } catch (const mf::Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return lab::kExitSchema;
  }
  std::optional<std::filesystem::path> dir;
  if (!output.empty()) dir = output;
  const auto outcome = lab::run_experiment(text, config, dir);
  if (outcome.exit_code == lab::kExitSchema || outcome.exit_code == lab::kExitRuntime) {
    std::cerr << "error: " << outcome.message << "\n";
  } else {
    std::cout << outcome.message << "\n";
    std::cout << "outputs: " << outcome.output_dir.string() << "\n";
  }
  return outcome.exit_code;
}

int cmd_w1(const std::string& a, const std::string& b, const std::string& plan_path) {
  try {
    const auto mu = mf::read_point_cloud(a);
    const auto nu = mf::read_point_cloud(b);
    if (mu.dim() != nu.dim()) {
      std::cerr << "error: dimension mismatch (" << mu.dim() << " vs " << nu.dim() << ")\n";
      return lab::kExitSchema;
    }
    const auto result = mf::w1_exact(mu, nu);
    std::cout << mf::format_double(result.distance) << "\n";
    if (!plan_path.empty()) mf::write_text(plan_path, mf::plan_csv(result.plan));
    return lab::kExitPass;
  } catch (const mf::CapacityError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return lab::kExitRuntime;
  } catch (const mf::NumericalError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return lab::kExitRuntime;
  } catch (const mf::Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return lab::kExitSchema;
  }
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Mean-field particle experiments and Wasserstein-1 tools", "meanfield-lab"};
  app.set_version_flag("--version", lab::kVersion);
  app.require_subcommand(1);
  app.footer("MEANFIELD_THREADS caps the number of worker threads.");

  auto* list = app.add_subcommand("list", "List scenarios and what each one checks");

  std::string config, output;
  auto* run = app.add_subcommand("run", "Run an experiment config");
  run->add_option("config", config, "Config file (JSON)")->required();
  run->add_option("--output,-o", output, "Output directory (overrides the config's \"output\")");

  std::string a, b, plan;
  auto* w1 = app.add_subcommand("w1", "Exact W1 distance between two point-cloud CSV files");
  w1->add_option("a", a, "First point cloud (weight,z1,...,zd)")->required();
  w1->add_option("b", b, "Second point cloud")->required();
  w1->add_option("--plan", plan, "Write the optimal plan as CSV (source,target,mass)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e) == 0 ? 0 : lab::kExitSchema;
  }

  if (list->parsed()) return cmd_list();
  if (run->parsed()) return cmd_run(config, output);
  return cmd_w1(a, b, plan);
}
