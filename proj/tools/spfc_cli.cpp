// Command-line front end: simulate, fit, summarize, metrics.

#include <CLI11.hpp>
#include <iostream>
#include <optional>

#include "spfc/cli.hpp"

namespace {

struct Overrides {
  std::optional<int> iterations;
  std::optional<std::uint64_t> seed;
  std::optional<std::string> out;
  std::optional<int> threads;
  bool resume = false;
};

// Command-line flags take precedence over keys in the configuration file.
spfc::RunConfig load_with_overrides(const std::string& path, const Overrides& o) {
  namespace fs = std::filesystem;
  spfc::json j = spfc::read_json_file(path);
  if (!j.is_object()) throw spfc::Error(spfc::ErrorKind::InvalidConfig, "configuration must be a JSON object");
  if (o.iterations) j["sampler"]["iterations"] = *o.iterations;
  if (o.seed) j["sampler"]["seed"] = *o.seed;
  if (o.threads) j["sampler"]["threads"] = *o.threads;
  if (o.resume) j["sampler"]["resume"] = true;
  fs::path base = fs::path(path).parent_path();
  if (o.out) j["output_dir"] = fs::absolute(*o.out).string();
  spfc::RunConfig cfg = spfc::parse_run_config(j, base);
  for (const auto& p : {cfg.panel, cfg.edges})
    if (!fs::exists(p)) throw spfc::Error(spfc::ErrorKind::Io, "input file '" + p.string() + "' does not exist");
  return cfg;
}

void report_error(std::string_view kind, const std::string& message) {
  std::cerr << spfc::json{{"error", kind}, {"message", message}}.dump() << "\n";
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Spatial functional clustering with random spanning tree partitions"};
  app.require_subcommand(1);

  auto* sim = app.add_subcommand("simulate", "Generate a built-in synthetic scenario");
  std::string scenario, sim_out;
  std::optional<std::uint64_t> sim_seed;
  bool list = false;
  sim->add_option("--scenario", scenario, "Scenario name (see --list)");
  sim->add_option("--out", sim_out, "Output directory");
  sim->add_option("--seed", sim_seed, "Override the scenario seed");
  sim->add_flag("--list", list, "List scenario names and exit");

  auto* fit = app.add_subcommand("fit", "Run the partition sampler");
  std::string fit_config;
  Overrides fit_over;
  fit->add_option("--config", fit_config, "Run configuration (JSON)")->required()->check(CLI::ExistingFile);
  fit->add_option("--iterations", fit_over.iterations, "Override sampler.iterations");
  fit->add_option("--seed", fit_over.seed, "Override sampler.seed");
  fit->add_option("--out", fit_over.out, "Override output_dir");
  fit->add_option("--threads", fit_over.threads, "Worker threads for marginal evaluations");
  fit->add_flag("--resume", fit_over.resume, "Continue from the checkpoint in the output directory");

  auto* sum = app.add_subcommand("summarize", "Point estimate and fitted curves from a trace");
  std::string sum_config, sum_trace;
  Overrides sum_over;
  sum->add_option("--config", sum_config, "Run configuration (JSON)")->required()->check(CLI::ExistingFile);
  sum->add_option("--trace", sum_trace, "Trace file written by fit")->required()->check(CLI::ExistingFile);
  sum->add_option("--out", sum_over.out, "Override output_dir");

  auto* met = app.add_subcommand("metrics", "Compare an estimated partition with the truth");
  std::string est, truth;
  met->add_option("--estimate", est, "Membership CSV (region,cluster)")->required()->check(CLI::ExistingFile);
  met->add_option("--truth", truth, "Membership CSV (region,true_cluster)")->required()->check(CLI::ExistingFile);

  CLI11_PARSE(app, argc, argv);

  try {
    if (sim->parsed()) {
      if (list) {
        for (const auto& s : spfc::builtin_scenarios()) std::cout << s.name << "\n";
        return 0;
      }
      if (scenario.empty() || sim_out.empty())
        throw spfc::Error(spfc::ErrorKind::InvalidConfig, "simulate needs --scenario and --out");
      spfc::ScenarioSpec spec = spfc::find_scenario(scenario);
      if (sim_seed) spec.seed = *sim_seed;
      spfc::cmd_simulate(spec, sim_out);
      std::cout << "wrote scenario " << spec.name << " to " << sim_out << "\n";
    } else if (fit->parsed()) {
      spfc::RunConfig cfg = load_with_overrides(fit_config, fit_over);
      auto res = spfc::cmd_fit(cfg);
      std::cout << "iterations=" << res.iterations << "\nfinal_clusters=" << res.final_clusters << "\n";
      for (const auto& [k, v] : res.stats)
        std::cout << "acceptance." << spfc::to_string(k) << "=" << v.rate() << "\n";
    } else if (sum->parsed()) {
      spfc::RunConfig cfg = load_with_overrides(sum_config, sum_over);
      auto res = spfc::cmd_summarize(cfg, sum_trace);
      std::cout << "clusters=" << res.curves.size() << "\n";
    } else if (met->parsed()) {
      std::cout << spfc::format_metrics(spfc::cmd_metrics(est, truth));
    }
  } catch (const spfc::Error& e) {
    report_error(spfc::to_string(e.kind()), e.what());
    return 2;
  } catch (const std::exception& e) {
    report_error("Internal", e.what());
    return 3;
  }
  return 0;
}
