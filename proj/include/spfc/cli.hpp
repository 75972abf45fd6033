#pragma once

// Run configuration and the simulate / fit / summarize / metrics commands.

#include <chrono>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <nlohmann/json.hpp>
#include <set>
#include <string>

#include "spfc/io.hpp"
#include "spfc/posterior.hpp"
#include "spfc/sampler.hpp"
#include "spfc/simdata.hpp"

namespace spfc {

using json = nlohmann::json;
namespace fs = std::filesystem;

namespace detail {

inline void check_keys(const json& j, const std::set<std::string>& allowed, const std::string& where) {
  if (!j.is_object()) throw Error(ErrorKind::InvalidConfig, where + " must be an object");
  for (const auto& [k, v] : j.items())
    if (!allowed.count(k)) throw Error(ErrorKind::InvalidConfig, "unknown key '" + k + "' in " + where);
}

template <class T>
T get_or(const json& j, const std::string& key, T fallback, const std::string& where) {
  if (!j.contains(key)) return fallback;
  try {
    return j.at(key).get<T>();
  } catch (const json::exception&) {
    throw Error(ErrorKind::InvalidConfig, "bad value for '" + key + "' in " + where);
  }
}

}  // namespace detail

inline PriorSpec prior_from_json(const json& j, const std::string& where) {
  std::string type = detail::get_or<std::string>(j, "type", "loggamma", where);
  if (type == "loggamma") {
    detail::check_keys(j, {"type", "shape", "rate"}, where);
    double a = detail::get_or(j, "shape", 1.0, where), b = detail::get_or(j, "rate", 5e-5, where);
    if (!(a > 0 && b > 0)) throw Error(ErrorKind::InvalidConfig, where + ": shape and rate must be > 0");
    return PriorSpec::loggamma(a, b);
  }
  if (type == "normal") {
    detail::check_keys(j, {"type", "mean", "precision"}, where);
    double m = detail::get_or(j, "mean", 0.0, where), p = detail::get_or(j, "precision", 1.0, where);
    if (!(p > 0)) throw Error(ErrorKind::InvalidConfig, where + ": precision must be > 0");
    return PriorSpec::normal(m, p);
  }
  throw Error(ErrorKind::InvalidConfig, where + ": unknown prior type '" + type + "'");
}

/// Parsed run configuration. Relative paths are resolved against the
/// directory of the configuration file.
struct RunConfig {
  fs::path panel;
  fs::path edges;
  fs::path output_dir;
  Family family = Family::Poisson;
  /// Fit a gaussian model to log(max(y, 0.5) / exposure) instead of counts.
  bool log_rate = false;
  json model;
  SamplerConfig sampler;
  double burn_in_fraction = 0.5;
  int checkpoint_every = 0;
  bool resume = false;
  bool plots = true;
  bool diagnostics = true;
  int n_draws = 500;
  /// Normalized configuration, echoed into every artifact.
  json echo;

  /// Family used to fit (gaussian for log-rate fits).
  Family fit_family() const { return log_rate ? Family::Gaussian : family; }
};

/// Default model: intercept plus quadratic fixed effects, with an extra
/// region-time noise term for counts.
inline json default_model_json(Family family) {
  json m;
  m["family"] = to_string(family);
  m["components"] = json::array({{{"kind", "intercept"}},
                                  {{"kind", "fixed_effects"}, {"basis", "monomial"}, {"degree", 2}}});
  m["error_term"] = family == Family::Poisson;
  return m;
}

inline RunConfig parse_run_config(const json& j, const fs::path& base_dir = {}) {
  detail::check_keys(j, {"panel", "edges", "output_dir", "model", "sampler", "emit"}, "config");
  RunConfig c;
  auto path_of = [&](const std::string& key) {
    if (!j.contains(key) || !j[key].is_string())
      throw Error(ErrorKind::InvalidConfig, "config needs a string '" + key + "'");
    fs::path p = j[key].get<std::string>();
    return p.is_absolute() ? p : base_dir / p;
  };
  c.panel = path_of("panel");
  c.edges = path_of("edges");
  c.output_dir = path_of("output_dir");

  json model = j.value("model", json::object());
  detail::check_keys(model, {"family", "transform", "components", "error_term", "error_prior", "obs_prior",
                             "fixed_precision", "sum_to_zero", "initial_theta"},
                     "model");
  c.family = family_from_string(detail::get_or<std::string>(model, "family", "poisson", "model"));
  std::string transform = detail::get_or<std::string>(model, "transform", "none", "model");
  if (transform == "log_rate") {
    if (c.family != Family::Gaussian)
      throw Error(ErrorKind::InvalidConfig, "transform log_rate requires family gaussian");
    c.log_rate = true;
  } else if (transform != "none") {
    throw Error(ErrorKind::InvalidConfig, "unknown transform '" + transform + "'");
  }
  json dm = default_model_json(c.family);
  for (auto& [k, v] : dm.items())
    if (!model.contains(k)) model[k] = v;
  model["transform"] = transform;
  c.model = model;

  json s = j.value("sampler", json::object());
  detail::check_keys(s, {"iterations", "burn_in_fraction", "c0", "seed", "move_probs", "geometric_q",
                         "partition_binomial", "grid_points_per_dim", "tolerate_nonconverged", "freeze_weights",
                         "cache_capacity", "threads", "check_every", "checkpoint_every", "resume"},
                     "sampler");
  auto& sc = c.sampler;
  sc.iterations = detail::get_or(s, "iterations", 2000, "sampler");
  if (sc.iterations < 1) throw Error(ErrorKind::InvalidConfig, "iterations must be >= 1");
  c.burn_in_fraction = detail::get_or(s, "burn_in_fraction", 0.5, "sampler");
  if (!(c.burn_in_fraction >= 0.0 && c.burn_in_fraction < 1.0))
    throw Error(ErrorKind::InvalidConfig, "burn_in_fraction must lie in [0,1)");
  sc.c0 = detail::get_or(s, "c0", 10, "sampler");
  sc.seed = detail::get_or<std::uint64_t>(s, "seed", 1, "sampler");
  if (s.contains("move_probs")) {
    const json& mp = s["move_probs"];
    if (mp.is_array()) {
      // positional form [birth, death, change, hyper]
      if (mp.size() != 4) throw Error(ErrorKind::InvalidConfig, "move_probs needs four entries");
      json named = {{"birth", mp[0]}, {"death", mp[1]}, {"change", mp[2]}, {"hyper", mp[3]}};
      s["move_probs"] = named;
    }
  }
  if (s.contains("move_probs")) {
    const json& mp = s["move_probs"];
    detail::check_keys(mp, {"birth", "death", "change", "hyper"}, "sampler.move_probs");
    sc.moves.r_birth = detail::get_or(mp, "birth", sc.moves.r_birth, "move_probs");
    sc.moves.r_death = detail::get_or(mp, "death", sc.moves.r_death, "move_probs");
    sc.moves.r_change = detail::get_or(mp, "change", sc.moves.r_change, "move_probs");
    sc.moves.r_hyper = detail::get_or(mp, "hyper", sc.moves.r_hyper, "move_probs");
  }
  sc.moves.q = detail::get_or(s, "geometric_q", sc.moves.q, "sampler");
  sc.moves.partition_binomial = detail::get_or(s, "partition_binomial", true, "sampler");
  sc.moves.validate();
  sc.laplace.grid_points_per_dim = detail::get_or(s, "grid_points_per_dim", 0, "sampler");
  if (sc.laplace.grid_points_per_dim < 0 || sc.laplace.grid_points_per_dim == 2)
    throw Error(ErrorKind::InvalidConfig, "grid_points_per_dim must be 0, 1 or >= 3");
  sc.tolerate_nonconverged = detail::get_or(s, "tolerate_nonconverged", true, "sampler");
  sc.freeze_weights = detail::get_or(s, "freeze_weights", false, "sampler");
  sc.cache_capacity = detail::get_or<std::size_t>(s, "cache_capacity", 0, "sampler");
  sc.threads = detail::get_or(s, "threads", 1, "sampler");
  sc.check_every = detail::get_or(s, "check_every", 0, "sampler");
  c.checkpoint_every = detail::get_or(s, "checkpoint_every", 0, "sampler");
  c.resume = detail::get_or(s, "resume", false, "sampler");
  if (sc.c0 < 1) throw Error(ErrorKind::InvalidConfig, "c0 must be >= 1");

  json e = j.value("emit", json::object());
  detail::check_keys(e, {"plots", "diagnostics", "n_draws"}, "emit");
  c.plots = detail::get_or(e, "plots", true, "emit");
  c.diagnostics = detail::get_or(e, "diagnostics", true, "emit");
  c.n_draws = detail::get_or(e, "n_draws", 500, "emit");
  if (c.n_draws < 1) throw Error(ErrorKind::InvalidConfig, "n_draws must be >= 1");

  c.echo = {{"panel", j["panel"]},
            {"edges", j["edges"]},
            {"output_dir", j["output_dir"]},
            {"model", c.model},
            {"sampler",
             {{"iterations", sc.iterations},
              {"burn_in_fraction", c.burn_in_fraction},
              {"c0", sc.c0},
              {"seed", sc.seed},
              {"move_probs",
               {{"birth", sc.moves.r_birth}, {"death", sc.moves.r_death}, {"change", sc.moves.r_change},
                {"hyper", sc.moves.r_hyper}}},
              {"geometric_q", sc.moves.q},
              {"partition_binomial", sc.moves.partition_binomial},
              {"grid_points_per_dim", sc.laplace.grid_points_per_dim},
              {"tolerate_nonconverged", sc.tolerate_nonconverged},
              {"freeze_weights", sc.freeze_weights}}},
            {"emit", {{"plots", c.plots}, {"diagnostics", c.diagnostics}, {"n_draws", c.n_draws}}}};
  return c;
}

inline json read_json_file(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorKind::Io, "cannot open '" + path.string() + "'");
  try {
    return json::parse(in);
  } catch (const json::parse_error& e) {
    throw Error(ErrorKind::InvalidConfig, path.string() + ": " + e.what());
  }
}

/// Loads and validates a configuration file; referenced inputs must exist.
inline RunConfig load_run_config(const fs::path& path) {
  RunConfig c = parse_run_config(read_json_file(path), path.parent_path());
  for (const auto& p : {c.panel, c.edges})
    if (!fs::exists(p)) throw Error(ErrorKind::Io, "input file '" + p.string() + "' does not exist");
  return c;
}

/// Thread count: the SPFC_THREADS environment variable overrides the file.
inline int resolve_threads(int configured) {
  if (const char* env = std::getenv("SPFC_THREADS")) {
    int v = std::atoi(env);
    if (v >= 1) return v;
  }
  return configured;
}

/// Latent model for a panel with T time points.
inline ModelSpec build_model_spec(const RunConfig& cfg, int T) {
  const json& m = cfg.model;
  ModelSpec spec;
  spec.family = cfg.fit_family();
  spec.T = T;
  spec.has_error_term = detail::get_or(m, "error_term", false, "model");
  if (m.contains("error_prior")) spec.error_prior = prior_from_json(m["error_prior"], "model.error_prior");
  if (m.contains("obs_prior")) spec.obs_prior = prior_from_json(m["obs_prior"], "model.obs_prior");
  spec.fixed_precision = detail::get_or(m, "fixed_precision", spec.fixed_precision, "model");
  spec.sum_to_zero = detail::get_or(m, "sum_to_zero", true, "model");
  if (m.contains("initial_theta")) {
    for (auto& [k, v] : m["initial_theta"].items()) spec.initial_theta[k] = v.get<double>();
  }
  if (!m["components"].is_array() || m["components"].empty())
    throw Error(ErrorKind::InvalidConfig, "model.components must be a non-empty array");
  for (const auto& cj : m["components"]) {
    const std::string where = "model.components";
    detail::check_keys(cj, {"kind", "basis", "degree", "n_basis", "period", "prior", "priors"}, where);
    LatentComponent comp;
    comp.kind = component_from_string(detail::get_or<std::string>(cj, "kind", "", where));
    comp.period = detail::get_or(cj, "period", 0, where);
    if (cj.contains("prior")) comp.priors.push_back(prior_from_json(cj["prior"], where + ".prior"));
    if (cj.contains("priors"))
      for (const auto& pj : cj["priors"]) comp.priors.push_back(prior_from_json(pj, where + ".priors"));
    if (comp.kind == ComponentKind::FixedEffects) {
      std::string basis = detail::get_or<std::string>(cj, "basis", "monomial", where);
      if (basis == "monomial")
        spec.covariate_basis = monomial_basis(T, detail::get_or(cj, "degree", 2, where));
      else if (basis == "bspline")
        spec.covariate_basis = bspline_basis(T, detail::get_or(cj, "n_basis", 8, where), detail::get_or(cj, "degree", 3, where));
      else
        throw Error(ErrorKind::InvalidConfig, "unknown fixed-effect basis '" + basis + "'");
    }
    spec.components.push_back(comp);
  }
  spec.validate();
  return spec;
}

/// Panel in the form the fitted family expects.
inline Panel fit_panel(const RunConfig& cfg, const IngestedData& data) {
  return cfg.log_rate ? log_rate_panel(data) : data.panel;
}

struct FitPaths {
  fs::path trace, checkpoint, diagnostics, summary;
  explicit FitPaths(const fs::path& dir)
      : trace(dir / "trace.csv"), checkpoint(dir / "checkpoint.json"), diagnostics(dir / "diagnostics.jsonl"),
        summary(dir / "fit_summary.json") {}
};

inline json checkpoint_json(const Sampler& s, const RunConfig& cfg) {
  const auto& st = s.state();
  json edges = json::array(), removed = json::array();
  for (const auto& e : st.tree().edges()) edges.push_back({e.u, e.v});
  for (const auto& e : st.partition.removed_edges()) removed.push_back({e.u, e.v});
  std::ostringstream rng;
  rng << st.rng;
  json stats = json::object();
  for (const auto& [k, v] : s.stats()) stats[to_string(k)] = {v.proposed, v.accepted};
  return {{"iter", st.iter},         {"seed", cfg.sampler.seed},
          {"tree_edges", edges},     {"removed_edges", removed},
          {"rng_state", rng.str()},  {"base_weights", st.base_weights.values()},
          {"stats", stats},          {"total_log_marginal", st.total_log_marginal}};
}

inline void write_text_atomically(const fs::path& path, const std::string& text) {
  fs::path tmp = path;
  tmp += ".tmp";
  {
    auto out = open_output(tmp.string());
    out << text;
  }
  fs::rename(tmp, path);
}

struct FitResult {
  long iterations = 0;
  std::map<MoveKind, MoveStats> stats;
  double final_log_marginal = 0.0;
  int final_clusters = 0;
};

/// Runs the chain described by `cfg`, writing the trace, a checkpoint, the
/// diagnostics log and a run summary into the output directory.
inline FitResult cmd_fit(const RunConfig& cfg, std::ostream& log = std::cerr) {
  IngestedData data = ingest_panel(cfg.panel.string(), cfg.edges.string(),
                                   cfg.log_rate ? Family::Poisson : cfg.family);
  const int T = data.panel.T();
  ModelSpec spec = build_model_spec(cfg, T);
  SamplerConfig sc = cfg.sampler;
  sc.threads = resolve_threads(sc.threads);
  if (data.initial_weights) sc.initial_weights = data.initial_weights->values();
  if (sc.c0 > data.graph->n_regions())
    throw Error(ErrorKind::InvalidConfig, "c0 exceeds the number of regions");

  fs::create_directories(cfg.output_dir);
  FitPaths paths(cfg.output_dir);
  Sampler sampler(data.graph, fit_panel(cfg, data), spec, sc);

  std::ofstream diag;
  if (cfg.diagnostics) {
    diag.open(paths.diagnostics, cfg.resume ? std::ios::app : std::ios::trunc);
    sampler.set_diagnostics([&diag](const std::string& line) { diag << line << "\n"; });
  }
  sampler.set_warnings([&log](const std::string& msg) { log << "warning: " << msg << "\n"; });

  const std::string echo_line = "# config: " + cfg.echo.dump();
  std::vector<std::string> kept;
  if (cfg.resume && fs::exists(paths.checkpoint)) {
    json ck = read_json_file(paths.checkpoint);
    if (ck.at("seed").get<std::uint64_t>() != sc.seed)
      throw Error(ErrorKind::InvalidConfig, "checkpoint seed differs from the configuration");
    std::vector<Edge> tree_edges, removed;
    for (const auto& e : ck.at("tree_edges")) tree_edges.emplace_back(e[0].get<int>(), e[1].get<int>());
    for (const auto& e : ck.at("removed_edges")) removed.emplace_back(e[0].get<int>(), e[1].get<int>());
    const long iter = ck.at("iter").get<long>();
    sampler.restore(SpanningTree(data.graph, tree_edges), removed, iter, ck.at("rng_state").get<std::string>(),
                    EdgeWeights(ck.at("base_weights").get<std::vector<double>>()),
                    ck.at("total_log_marginal").get<double>());
    std::map<MoveKind, MoveStats> restored;
    for (auto& [k, v] : ck.at("stats").items()) restored[move_kind_from_string(k)] = {v[0].get<long>(), v[1].get<long>()};
    sampler.set_stats(restored);
    for (const auto& r : read_trace(paths.trace.string(), data.graph->n_regions()))
      if (r.iter <= iter) kept.push_back(format_trace_record(r));
    if (static_cast<long>(kept.size()) != iter)
      throw Error(ErrorKind::TraceCorrupt, "trace is shorter than the checkpoint");
    log << "resuming at iteration " << iter << "\n";
  } else {
    sampler.init();
  }

  auto trace = open_output(paths.trace.string());
  trace << echo_line << "\n" << kTraceHeader << "\n";
  for (const auto& line : kept) trace << line << "\n";

  auto save_checkpoint = [&] {
    write_text_atomically(paths.checkpoint, checkpoint_json(sampler, cfg).dump(1) + "\n");
  };
  while (sampler.state().iter < sc.iterations) {
    trace << format_trace_record(sampler.step()) << "\n";
    if (cfg.checkpoint_every > 0 && sampler.state().iter % cfg.checkpoint_every == 0) {
      trace.flush();
      save_checkpoint();
    }
  }
  trace.flush();
  save_checkpoint();

  FitResult res;
  res.iterations = sampler.state().iter;
  res.stats = sampler.stats();
  res.final_log_marginal = sampler.state().total_log_marginal;
  res.final_clusters = sampler.state().partition.n_clusters();
  json summary = {{"iterations", res.iterations},
                  {"final_clusters", res.final_clusters},
                  {"final_log_marginal", res.final_log_marginal},
                  {"cache_entries", sampler.state().cache.size()},
                  {"config", cfg.echo}};
  for (const auto& [k, v] : res.stats)
    summary["acceptance"][to_string(k)] = {{"proposed", v.proposed}, {"accepted", v.accepted}, {"rate", v.rate()}};
  write_text_atomically(paths.summary, summary.dump(1) + "\n");
  return res;
}

struct CurveSeries {
  std::string title;
  std::vector<Eigen::VectorXd> observed;
  Eigen::VectorXd mean, lo, hi;
};

/// Small multiples of fitted curves with bands and observed series in grey.
inline void write_curves_svg(std::ostream& out, const std::vector<CurveSeries>& panels, const std::string& ylabel) {
  const int C = static_cast<int>(panels.size());
  const int cols = std::max(1, static_cast<int>(std::ceil(std::sqrt(static_cast<double>(C)))));
  const int rows = (C + cols - 1) / cols;
  const double W = 320, H = 220, pad = 36;
  out << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << cols * W << "\" height=\"" << rows * H
      << "\" font-family=\"sans-serif\" font-size=\"11\">\n";
  for (int c = 0; c < C; ++c) {
    const auto& p = panels[c];
    const double x0 = (c % cols) * W, y0 = (c / cols) * H;
    const int T = static_cast<int>(p.mean.size());
    double lo = std::min(p.lo.minCoeff(), p.mean.minCoeff()), hi = std::max(p.hi.maxCoeff(), p.mean.maxCoeff());
    for (const auto& o : p.observed) lo = std::min(lo, o.minCoeff()), hi = std::max(hi, o.maxCoeff());
    if (hi - lo < 1e-12) hi = lo + 1.0;
    auto px = [&](int t) { return x0 + pad + (W - 2 * pad) * (T > 1 ? static_cast<double>(t) / (T - 1) : 0.5); };
    auto py = [&](double v) { return y0 + H - pad - (H - 2 * pad) * (v - lo) / (hi - lo); };
    auto path = [&](const Eigen::VectorXd& v) {
      std::ostringstream s;
      for (int t = 0; t < T; ++t) s << (t ? " L" : "M") << px(t) << "," << py(v[t]);
      return s.str();
    };
    out << "<g>\n<rect x=\"" << x0 + pad << "\" y=\"" << y0 + pad << "\" width=\"" << W - 2 * pad << "\" height=\""
        << H - 2 * pad << "\" fill=\"none\" stroke=\"#999\"/>\n";
    out << "<text x=\"" << x0 + pad << "\" y=\"" << y0 + pad - 8 << "\">" << p.title << "</text>\n";
    out << "<text x=\"" << x0 + 4 << "\" y=\"" << y0 + pad + 4 << "\">" << detail::format_double(hi).substr(0, 6)
        << "</text>\n<text x=\"" << x0 + 4 << "\" y=\"" << y0 + H - pad << "\">"
        << detail::format_double(lo).substr(0, 6) << "</text>\n";
    for (const auto& o : p.observed)
      out << "<path d=\"" << path(o) << "\" fill=\"none\" stroke=\"#bbb\" stroke-width=\"0.7\"/>\n";
    std::ostringstream band;
    for (int t = 0; t < T; ++t) band << (t ? " L" : "M") << px(t) << "," << py(p.hi[t]);
    for (int t = T - 1; t >= 0; --t) band << " L" << px(t) << "," << py(p.lo[t]);
    out << "<path d=\"" << band.str() << " Z\" fill=\"#d33\" fill-opacity=\"0.2\" stroke=\"none\"/>\n";
    out << "<path d=\"" << path(p.mean) << "\" fill=\"none\" stroke=\"#d00\" stroke-width=\"1.6\"/>\n</g>\n";
  }
  out << "<text x=\"4\" y=\"12\">" << ylabel << "</text>\n</svg>\n";
}

struct SummaryResult {
  Membership estimate;  ///< relabelled by size
  std::vector<ClusterCurves> curves;
  std::size_t used_records = 0;
};

/// Dahl estimate after burn-in, per-cluster curves and optional plots.
inline SummaryResult cmd_summarize(const RunConfig& cfg, const fs::path& trace_path, std::ostream& log = std::cerr) {
  IngestedData data = ingest_panel(cfg.panel.string(), cfg.edges.string(),
                                   cfg.log_rate ? Family::Poisson : cfg.family);
  const int n = data.graph->n_regions(), T = data.panel.T();
  auto records = read_trace(trace_path.string(), n);
  if (records.empty()) throw Error(ErrorKind::EmptyTrace, "trace has no iterations");
  const std::size_t burn = static_cast<std::size_t>(std::floor(cfg.burn_in_fraction * records.size()));
  std::vector<Membership> kept;
  for (std::size_t k = burn; k < records.size(); ++k) kept.push_back(records[k].membership);

  SummaryResult res;
  res.used_records = kept.size();
  res.estimate = relabel_by_size(dahl_point_estimate(kept));
  ModelSpec spec = build_model_spec(cfg, T);
  LatentModel model(spec);
  Panel panel = fit_panel(cfg, data);
  Rng rng(cfg.sampler.seed ^ 0x5bd1e995ULL);
  res.curves = composition_sample(model, panel, res.estimate, cfg.n_draws, rng, cfg.sampler.laplace);

  fs::create_directories(cfg.output_dir);
  const std::string echo_line = "# config: " + cfg.echo.dump() + "\n";
  {
    auto out = open_output((cfg.output_dir / "membership.csv").string());
    out << echo_line;
    write_membership(out, data.region_ids(), res.estimate);
  }
  {
    auto out = open_output((cfg.output_dir / "curves.csv").string());
    out << echo_line << "cluster,time,mean,q05,q95\n";
    for (const auto& cc : res.curves)
      for (int t = 0; t < T; ++t)
        out << cc.label << "," << data.times[t] << "," << detail::format_double(cc.summary.h_mean[t]) << ","
            << detail::format_double(cc.summary.h_q05[t]) << "," << detail::format_double(cc.summary.h_q95[t])
            << "\n";
  }
  if (cfg.plots) {
    // counts are shown as relative risk, gaussian data on the linear-predictor scale
    const bool rr = cfg.log_rate || cfg.family == Family::Poisson;
    std::vector<CurveSeries> series;
    for (const auto& cc : res.curves) {
      CurveSeries s;
      s.title = "cluster " + std::to_string(cc.label) + " (" + std::to_string(cc.members.size()) + " regions)";
      for (int i : cc.members) {
        Eigen::VectorXd o = rr ? Eigen::VectorXd((data.panel.y.row(i).array() / data.exposure.row(i).array()).transpose())
                               : Eigen::VectorXd(data.panel.y.row(i).transpose());
        s.observed.push_back(o);
      }
      s.mean = rr ? cc.summary.rr_mean : cc.summary.h_mean;
      s.lo = rr ? cc.summary.rr_q05 : cc.summary.h_q05;
      s.hi = rr ? cc.summary.rr_q95 : cc.summary.h_q95;
      series.push_back(std::move(s));
    }
    auto out = open_output((cfg.output_dir / "curves.svg").string());
    write_curves_svg(out, series, rr ? "relative risk" : "h(t)");
  }
  log << "summarized " << res.used_records << " of " << records.size() << " iterations; "
      << detail::count_labels(res.estimate) << " clusters\n";
  return res;
}

/// Compares two membership files matched by region id.
inline PartitionMetrics cmd_metrics(const fs::path& estimate_csv, const fs::path& truth_csv) {
  auto est = read_membership(estimate_csv.string());
  auto truth = read_membership(truth_csv.string());
  if (est.size() != truth.size())
    throw Error(ErrorKind::RegionMismatch, "estimate and truth cover different numbers of regions");
  Membership a, b;
  for (const auto& [region, label] : est) {
    auto it = truth.find(region);
    if (it == truth.end()) throw Error(ErrorKind::RegionMismatch, "region '" + region + "' missing from truth");
    a.push_back(label);
    b.push_back(it->second);
  }
  return compare_partitions(canonical_labels(a), canonical_labels(b));
}

inline std::string format_metrics(const PartitionMetrics& m) {
  return "ari=" + detail::format_double(m.ari) + "\nri=" + detail::format_double(m.ri) +
         "\nnid=" + detail::format_double(m.nid) + "\naccuracy=" + detail::format_double(m.accuracy) + "\n";
}

inline std::string region_label(int i) { return "r" + std::to_string(i); }

/// Writes a scenario's panel, edges, truth, an echo of the scenario and a
/// ready-to-run fit configuration into `dir`.
inline SimulatedPanel cmd_simulate(const ScenarioSpec& spec, const fs::path& dir) {
  SimulatedPanel sim = simulate_scenario(spec);
  fs::create_directories(dir);
  const int n = spec.n_regions, T = spec.T;
  const std::string echo = "# scenario: " + spec.name + " seed " + std::to_string(spec.seed) + "\n";
  {
    auto out = open_output((dir / "panel.csv").string());
    out << echo << "region,time,y" << (spec.family == Family::Poisson ? ",population" : "") << "\n";
    for (int i = 0; i < n; ++i)
      for (int t = 0; t < T; ++t) {
        out << region_label(i) << "," << t + 1 << "," << detail::format_double(sim.y(i, t));
        if (spec.family == Family::Poisson) out << "," << detail::format_double(sim.population[i]);
        out << "\n";
      }
  }
  {
    auto out = open_output((dir / "edges.csv").string());
    out << echo << "from,to\n";
    for (const auto& e : sim.lattice.graph->edges()) out << region_label(e.u) << "," << region_label(e.v) << "\n";
  }
  std::vector<std::string> ids;
  for (int i = 0; i < n; ++i) ids.push_back(region_label(i));
  {
    auto out = open_output((dir / "truth.csv").string());
    out << echo;
    write_membership(out, ids, sim.truth, "true_cluster");
  }
  json sc = {{"name", spec.name},
             {"n_regions", n},
             {"T", T},
             {"true_C", spec.true_C},
             {"latent", to_string(spec.latent)},
             {"family", to_string(spec.family)},
             {"seed", spec.seed},
             {"population_log_mean", spec.population_log_mean},
             {"population_log_var", spec.population_log_var}};
  for (const auto& c : spec.clusters)
    sc["clusters"].push_back({{"beta", c.beta}, {"tau", c.tau}, {"ar", {c.ar1, c.ar2}}});
  for (int i = 0; i < n; ++i)
    sc["centroids"].push_back({sim.lattice.centroids[i].x, sim.lattice.centroids[i].y});
  write_text_atomically(dir / "scenario.json", sc.dump(1) + "\n");

  json model = default_model_json(spec.family);
  if (spec.latent == LatentKind::BSpline)
    model["components"] = json::array({{{"kind", "intercept"}}, {{"kind", "rw1"}}});
  json fit = {{"panel", "panel.csv"},
              {"edges", "edges.csv"},
              {"output_dir", "fit"},
              {"model", model},
              {"sampler", {{"iterations", 2000}, {"c0", std::min(10, n)}, {"seed", spec.seed}}}};
  write_text_atomically(dir / "fit_config.json", fit.dump(1) + "\n");
  return sim;
}

}  // namespace spfc
