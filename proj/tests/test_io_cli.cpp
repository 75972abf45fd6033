#include <gtest/gtest.h>

#include <algorithm>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "spfc/cli.hpp"

using namespace spfc;
namespace fs = std::filesystem;

namespace {

CsvTable csv(const std::string& text) {
  std::istringstream in(text);
  return parse_csv(in, "test");
}

ErrorKind ingest_error(const std::string& panel, const std::string& edges, Family fam = Family::Poisson) {
  try {
    ingest_panel(csv(panel), csv(edges), fam);
  } catch (const Error& e) {
    return e.kind();
  }
  return ErrorKind::Io;
}

const char* kEdges = "from,to\nr1,r2\nr2,r3\n";

fs::path fresh_dir(const std::string& name) {
  fs::path d = fs::temp_directory_path() / ("spfc_test_" + name);
  fs::remove_all(d);
  fs::create_directories(d);
  return d;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream s;
  s << in.rdbuf();
  return s.str();
}

json base_config() {
  return {{"panel", "panel.csv"}, {"edges", "edges.csv"}, {"output_dir", "out"}};
}

ErrorKind config_error(const json& j) {
  try {
    parse_run_config(j);
  } catch (const Error& e) {
    return e.kind();
  }
  return ErrorKind::Io;
}

// Small simulated study on disk with a short fit configuration.
RunConfig small_study(const fs::path& dir, int iterations) {
  auto spec = find_scenario("sim1-poly-gaussian-desk");
  cmd_simulate(spec, dir);
  json j = read_json_file(dir / "fit_config.json");
  j["sampler"]["iterations"] = iterations;
  j["sampler"]["c0"] = 3;
  j["emit"] = {{"plots", true}, {"n_draws", 100}};
  return parse_run_config(j, dir);
}

}  // namespace

TEST(Ingest, CompletePanelIsAccepted) {
  auto d = ingest_panel(csv("region,time,y,population\n"
                            "r1,2,3,10\nr1,1,4,10\nr2,1,0,20\nr2,2,1,20\nr3,1,5,5\nr3,2,6,5\n"),
                        csv(kEdges), Family::Poisson);
  EXPECT_EQ(d.graph->n_regions(), 3);
  EXPECT_EQ(d.panel.T(), 2);
  EXPECT_EQ(d.times, (std::vector<std::string>{"1", "2"}));
  EXPECT_EQ(d.panel.y(0, 0), 4.0);
  EXPECT_EQ(d.panel.y(0, 1), 3.0);
  EXPECT_NEAR(d.panel.offset(1, 0), std::log(20.0), 1e-15);
  EXPECT_EQ(d.region_ids(), (std::vector<std::string>{"r1", "r2", "r3"}));
}

TEST(Ingest, NumericTimesSortNumerically) {
  auto d = ingest_panel(csv("region,time,y\nr1,10,1\nr1,9,2\nr2,10,3\nr2,9,4\nr3,10,5\nr3,9,6\n"), csv(kEdges),
                        Family::Gaussian);
  EXPECT_EQ(d.times, (std::vector<std::string>{"9", "10"}));
  EXPECT_EQ(d.panel.offset.cwiseAbs().maxCoeff(), 0.0);
}

TEST(Ingest, Errors) {
  EXPECT_EQ(ingest_error("region,time,y\nr1,1,1\nr2,1,1\n", kEdges), ErrorKind::MissingCell);
  EXPECT_EQ(ingest_error("region,time,y\nr1,1,1\nr2,1,1\nr3,1,1\nr9,1,1\n", kEdges), ErrorKind::UnknownRegion);
  EXPECT_EQ(ingest_error("region,time,y\nr1,1,1\nr2,1,1.5\nr3,1,1\n", kEdges), ErrorKind::NonIntegerCount);
  EXPECT_EQ(ingest_error("region,time,y\nr1,1,1\nr2,1,-1\nr3,1,1\n", kEdges), ErrorKind::NegativeCount);
  EXPECT_EQ(ingest_error("region,time,y\nr1,1,1\nr1,1,2\nr2,1,1\nr3,1,1\n", kEdges), ErrorKind::InvalidConfig);
  EXPECT_EQ(ingest_error("region,time,y\nr1,1,1\nr2,1,1.5\nr3,1,1\n", kEdges, Family::Gaussian), ErrorKind::Io);
  try {
    ingest_panel(csv("region,time,y\nr1,1,1\nr2,1,1\nr3,2,1\nr1,2,1\nr2,2,1\n"), csv(kEdges), Family::Poisson);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::MissingCell);
    EXPECT_NE(std::string(e.what()).find("(r3, 1)"), std::string::npos) << e.what();
  }
}

TEST(Ingest, LogRateTransform) {
  auto d = ingest_panel(csv("region,time,y,expected\nr1,1,0,2\nr2,1,4,2\nr3,1,1,1\n"), csv(kEdges), Family::Poisson);
  auto p = log_rate_panel(d);
  EXPECT_NEAR(p.y(0, 0), std::log(0.25), 1e-15);
  EXPECT_NEAR(p.y(1, 0), std::log(2.0), 1e-15);
  EXPECT_EQ(p.offset.cwiseAbs().maxCoeff(), 0.0);
}

TEST(Config, DefaultsAndValidation) {
  auto c = parse_run_config(base_config());
  EXPECT_EQ(c.sampler.iterations, 2000);
  EXPECT_EQ(c.sampler.moves.q, 0.5);
  EXPECT_EQ(c.family, Family::Poisson);
  EXPECT_TRUE(c.sampler.tolerate_nonconverged);

  json j = base_config();
  j["sampler"] = {{"iterations", 0}};
  EXPECT_EQ(config_error(j), ErrorKind::InvalidConfig);
  j = base_config();
  j["samplr"] = json::object();
  EXPECT_EQ(config_error(j), ErrorKind::InvalidConfig);
  j = base_config();
  j["sampler"] = {{"burn_in_fraction", 1.0}};
  EXPECT_EQ(config_error(j), ErrorKind::InvalidConfig);
  j = base_config();
  j["sampler"] = {{"geometric_q", 1.0}};
  EXPECT_EQ(config_error(j), ErrorKind::InvalidQ);
  j = base_config();
  j["model"] = {{"family", "poisson"}, {"transform", "log_rate"}};
  EXPECT_EQ(config_error(j), ErrorKind::InvalidConfig);
}

TEST(Config, MoveProbabilityForms) {
  json j = base_config();
  j["sampler"] = {{"move_probs", {0.4, 0.4, 0.1, 0.1}}};
  auto a = parse_run_config(j);
  EXPECT_EQ(a.sampler.moves.r_birth, 0.4);
  EXPECT_EQ(a.sampler.moves.r_hyper, 0.1);
  j["sampler"] = {{"move_probs", {{"birth", 0.3}, {"death", 0.3}, {"change", 0.3}, {"hyper", 0.1}}}};
  auto b = parse_run_config(j);
  EXPECT_EQ(b.sampler.moves.r_change, 0.3);
  j["sampler"] = {{"move_probs", {0.5, 0.5, 0.5, 0.5}}};
  EXPECT_EQ(config_error(j), ErrorKind::InvalidConfig);
}

TEST(Config, ModelComponentsBuild) {
  json j = base_config();
  j["model"] = {{"family", "gaussian"},
                {"components", {{{"kind", "intercept"}}, {{"kind", "rw1"}, {"prior", {{"type", "loggamma"}, {"shape", 1}, {"rate", 0.01}}}}}}};
  auto c = parse_run_config(j);
  auto spec = build_model_spec(c, 12);
  EXPECT_EQ(spec.components.size(), 2u);
  EXPECT_EQ(spec.family, Family::Gaussian);
  EXPECT_FALSE(spec.has_error_term);
}

TEST(Trace, CorruptInputsAreRejected) {
  const std::string head = std::string(kTraceHeader) + "\n";
  auto kind = [](const std::string& text, int n) {
    std::istringstream in(text);
    try {
      read_trace(in, n);
    } catch (const Error& e) {
      return e.kind();
    }
    return ErrorKind::Io;
  };
  EXPECT_EQ(kind("", 0), ErrorKind::TraceCorrupt);
  EXPECT_EQ(kind("iter,move\n", 0), ErrorKind::TraceCorrupt);
  EXPECT_EQ(kind(head + "1,birth,1,2,-3.5,0*2|1*2\n", 4), ErrorKind::Io);
  EXPECT_EQ(kind(head + "1,birth,1,3,-3.5,0*2|1*2\n", 4), ErrorKind::TraceCorrupt);
  EXPECT_EQ(kind(head + "1,birth,1,2,-3.5,0*2|1*2\n", 5), ErrorKind::TraceCorrupt);
  EXPECT_EQ(kind(head + "1,jump,1,2,-3.5,0*2|1*2\n", 4), ErrorKind::TraceCorrupt);
  EXPECT_EQ(kind(head + "1,birth,1,2,abc,0*2|1*2\n", 4), ErrorKind::TraceCorrupt);
  EXPECT_EQ(kind(head + "1,birth,2,2,-3.5,0*2|1*2\n", 4), ErrorKind::TraceCorrupt);
  EXPECT_EQ(kind(head + "1,birth,1,2,-3.5\n", 4), ErrorKind::TraceCorrupt);
}

TEST(Trace, RecordRoundTrip) {
  TraceRecord r;
  r.iter = 17;
  r.move = MoveKind::Change;
  r.accepted = true;
  r.membership = {0, 0, 2, 1, 1};
  r.n_clusters = 3;
  r.log_marginal = -1234.56789012345678;
  std::istringstream in(std::string(kTraceHeader) + "\n" + format_trace_record(r) + "\n");
  auto back = read_trace(in, 5);
  ASSERT_EQ(back.size(), 1u);
  EXPECT_EQ(back[0].iter, 17);
  EXPECT_EQ(back[0].move, MoveKind::Change);
  EXPECT_EQ(back[0].membership, r.membership);
  EXPECT_EQ(back[0].log_marginal, r.log_marginal);
}

TEST(Metrics, IdentityShuffledLabelsAndMismatch) {
  auto dir = fresh_dir("metrics");
  auto write = [&](const std::string& name, const std::string& text) {
    std::ofstream(dir / name) << text;
    return dir / name;
  };
  auto truth = write("truth.csv", "region,true_cluster\na,0\nb,0\nc,1\nd,1\ne,2\n");
  auto same = write("same.csv", "region,cluster\ne,7\nd,3\nc,3\nb,5\na,5\n");
  auto m = cmd_metrics(same, truth);
  EXPECT_EQ(m.ari, 1.0);
  EXPECT_EQ(m.nid, 0.0);
  EXPECT_EQ(m.accuracy, 1.0);
  EXPECT_EQ(format_metrics(m), "ari=1\nri=1\nnid=0\naccuracy=1\n");
  auto other = write("other.csv", "region,cluster\na,0\nb,1\nc,1\nd,1\ne,2\n");
  auto x = cmd_metrics(other, truth);
  auto relabelled = write("relabelled.csv", "region,cluster\na,4\nb,9\nc,9\nd,9\ne,0\n");
  auto y = cmd_metrics(relabelled, truth);
  EXPECT_EQ(x.ari, y.ari);
  EXPECT_EQ(x.nid, y.nid);
  EXPECT_EQ(x.accuracy, y.accuracy);
  auto missing = write("missing.csv", "region,cluster\na,0\nb,0\nc,1\nd,1\nz,2\n");
  try {
    cmd_metrics(missing, truth);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::RegionMismatch);
  }
  auto shorter = write("short.csv", "region,cluster\na,0\n");
  EXPECT_THROW(cmd_metrics(shorter, truth), Error);
}

TEST(Simulate, WritesReadableFiles) {
  auto dir = fresh_dir("simulate");
  auto sim = cmd_simulate(find_scenario("sim1-poly-poisson-desk"), dir);
  for (const char* f : {"panel.csv", "edges.csv", "truth.csv", "scenario.json", "fit_config.json"})
    EXPECT_TRUE(fs::exists(dir / f)) << f;
  auto data = ingest_panel((dir / "panel.csv").string(), (dir / "edges.csv").string(), Family::Poisson);
  // rows follow the edge file's first-appearance order, so match by id
  for (int i = 0; i < 30; ++i) {
    const int row = static_cast<int>(std::find(data.region_ids().begin(), data.region_ids().end(), region_label(i)) -
                                     data.region_ids().begin());
    ASSERT_LT(row, 30);
    EXPECT_EQ(data.panel.y.row(row), sim.y.row(i));
  }
  auto truth = read_membership((dir / "truth.csv").string());
  EXPECT_EQ(truth.size(), 30u);
  auto cfg = load_run_config(dir / "fit_config.json");
  EXPECT_EQ(cfg.family, Family::Poisson);
}

TEST(Fit, SameSeedGivesByteIdenticalTrace) {
  auto dir = fresh_dir("determinism");
  auto cfg = small_study(dir, 120);
  cfg.output_dir = dir / "a";
  cmd_fit(cfg, std::cerr);
  cfg.output_dir = dir / "b";
  cmd_fit(cfg, std::cerr);
  std::string a = slurp(dir / "a" / "trace.csv"), b = slurp(dir / "b" / "trace.csv");
  EXPECT_FALSE(a.empty());
  EXPECT_EQ(a, b);
}

TEST(Fit, ResumeReproducesUninterruptedTrace) {
  auto dir = fresh_dir("resume");
  auto cfg = small_study(dir, 150);
  cfg.diagnostics = false;
  cfg.output_dir = dir / "whole";
  cmd_fit(cfg, std::cerr);

  cfg.output_dir = dir / "split";
  cfg.sampler.iterations = 70;
  cmd_fit(cfg, std::cerr);
  cfg.sampler.iterations = 150;
  cfg.resume = true;
  auto res = cmd_fit(cfg, std::cerr);
  EXPECT_EQ(res.iterations, 150);
  EXPECT_EQ(slurp(dir / "whole" / "trace.csv"), slurp(dir / "split" / "trace.csv"));
  EXPECT_EQ(slurp(dir / "whole" / "checkpoint.json"), slurp(dir / "split" / "checkpoint.json"));
}

TEST(Summarize, CurvesFileHasOneRowPerClusterAndTime) {
  auto dir = fresh_dir("summarize");
  auto cfg = small_study(dir, 200);
  cfg.output_dir = dir / "fit";
  cmd_fit(cfg, std::cerr);
  auto res = cmd_summarize(cfg, dir / "fit" / "trace.csv", std::cerr);
  const int C = detail::count_labels(res.estimate);
  auto curves = read_csv((dir / "fit" / "curves.csv").string());
  EXPECT_EQ(curves.header, (std::vector<std::string>{"cluster", "time", "mean", "q05", "q95"}));
  EXPECT_EQ(static_cast<int>(curves.rows.size()), C * 40);
  for (const auto& row : curves.rows) {
    double m = *detail::parse_double(row[2]), lo = *detail::parse_double(row[3]), hi = *detail::parse_double(row[4]);
    EXPECT_LE(lo, m);
    EXPECT_LE(m, hi);
  }
  auto membership = read_membership((dir / "fit" / "membership.csv").string());
  EXPECT_EQ(membership.size(), 30u);
  EXPECT_TRUE(fs::exists(dir / "fit" / "curves.svg"));
  // labels are ordered by cluster size
  std::vector<int> sizes(C, 0);
  for (int c : res.estimate) ++sizes[c];
  EXPECT_TRUE(std::is_sorted(sizes.rbegin(), sizes.rend()));
}

TEST(Summarize, SinglePartitionTraceIsEmitted) {
  auto dir = fresh_dir("single");
  auto cfg = small_study(dir, 1);
  cfg.output_dir = dir / "fit";
  auto sim = simulate_scenario(find_scenario("sim1-poly-gaussian-desk"));
  TraceRecord r;
  r.iter = 1;
  r.move = MoveKind::Hyper;
  r.accepted = true;
  r.membership = sim.truth;
  r.n_clusters = detail::count_labels(sim.truth);
  fs::create_directories(cfg.output_dir);
  std::ofstream(cfg.output_dir / "trace.csv") << kTraceHeader << "\n" << format_trace_record(r) << "\n";
  cfg.burn_in_fraction = 0.0;
  auto res = cmd_summarize(cfg, cfg.output_dir / "trace.csv", std::cerr);
  EXPECT_EQ(canonical_labels(res.estimate), canonical_labels(sim.truth));
}

TEST(Binary, ExitCodesAndStructuredErrors) {
  auto dir = fresh_dir("binary");
  const std::string cli = SPFC_CLI_PATH;
  EXPECT_EQ(std::system((cli + " simulate --scenario sim1-poly-gaussian-desk --out " + (dir / "s").string() +
                         " > /dev/null").c_str()),
            0);
  json j = read_json_file(dir / "s" / "fit_config.json");
  j["sampler"]["iterations"] = 0;
  std::ofstream(dir / "s" / "bad.json") << j.dump();
  std::string cmd = cli + " fit --config " + (dir / "s" / "bad.json").string() + " 2> " + (dir / "err.txt").string();
  int rc = std::system(cmd.c_str());
  EXPECT_NE(rc, 0);
  EXPECT_NE(slurp(dir / "err.txt").find("\"error\":\"InvalidConfig\""), std::string::npos) << slurp(dir / "err.txt");
  std::string met = cli + " metrics --estimate " + (dir / "s" / "truth.csv").string() + " --truth " +
                    (dir / "s" / "truth.csv").string() + " > " + (dir / "m.txt").string();
  EXPECT_EQ(std::system(met.c_str()), 0);
  EXPECT_EQ(slurp(dir / "m.txt"), "ari=1\nri=1\nnid=0\naccuracy=1\n");
}
