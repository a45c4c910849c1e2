// Command-line front end: tracking runs, CRB sweeps, and Monte Carlo
// experiments over scenario files, with CSV/JSON artifacts.

#include <CLI11.hpp>
#include <json.hpp>

#include <algorithm>
#include <chrono>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>

#ifdef _OPENMP
#include <omp.h>
#endif

#include "leoris/scenario.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace leoris;

namespace {

constexpr int kExitConfig = 2;
constexpr int kExitRuntime = 3;

std::string fmt(double x) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.12g", x);
  return buf;
}

std::vector<std::string> split_list(const std::string& s) {
  std::vector<std::string> out;
  std::stringstream ss(s);
  std::string tok;
  while (std::getline(ss, tok, ',')) {
    if (!tok.empty()) out.push_back(tok);
  }
  return out;
}

std::vector<int> split_ints(const std::string& s) {
  std::vector<int> out;
  for (const std::string& tok : split_list(s)) out.push_back(std::stoi(tok));
  return out;
}

void apply_thread_cap() {
#ifdef _OPENMP
  if (const char* env = std::getenv("MT_THREADS")) {
    const int cap = std::atoi(env);
    if (cap > 0) omp_set_num_threads(std::min(cap, omp_get_max_threads()));
  }
#endif
}

Scenario resolve_scenario(const std::string& path, bool paper_scale) {
  Scenario sc =
      paper_scale ? Scenario::paper_default() : Scenario::desk_default();
  if (!path.empty()) {
    if (!fs::exists(path)) {
      throw Error("scenario file does not exist: " + path);
    }
    sc = load_scenario(path);
    if (paper_scale) {
      const Scenario paper = Scenario::paper_default();
      sc.frame.subcarriers = paper.frame.subcarriers;
      sc.frame.transmissions = paper.frame.transmissions;
      sc.satellites = paper.satellites;
      sc.riss = paper.riss;
    }
  }
  return sc;
}

void write_file(const fs::path& path, const std::string& content) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error("cannot write " + path.string());
  out << content;
}

json region_summary(const std::map<std::string, RegionStats>& by_region) {
  json out;
  for (const auto& [region, st] : by_region) {
    out[region] = {{"pos_rmse", st.pos_rmse},
                   {"vel_rmse", st.vel_rmse},
                   {"orient_rmse", st.orient_rmse},
                   {"samples", st.count}};
  }
  return out;
}

int cmd_track(const std::string& scenario_path, bool paper_scale,
              uint64_t seed, const std::string& out_dir,
              const std::string& filter, const std::string& belief) {
  const auto t0 = std::chrono::steady_clock::now();
  Scenario sc;
  VariantSpec variant;
  try {
    sc = resolve_scenario(scenario_path, paper_scale);
    variant = parse_variant(filter, belief);
    fs::create_directories(out_dir);
  } catch (const std::exception& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return kExitConfig;
  }

  try {
    const ScenarioRealization real = realize(sc, Rng::derive(seed, 0));
    FilterConfig cfg = sc.filter_config();
    cfg.belief = variant.belief;

    std::vector<UeState> estimates;
    std::vector<double> nees_per_step;
    if (variant.filter == "riemannian") {
      std::vector<UeState> truth_steps(real.truth.begin() + 1,
                                       real.truth.end());
      const TrackResult res = track(real.initial, real.timeline, cfg,
                                    &truth_steps);
      for (size_t i = 1; i < res.states.size(); ++i) {
        estimates.push_back(res.states[i].mean);
      }
      nees_per_step = res.nees;
    } else {
      const EuclideanTrackResult res = euclidean_track(
          real.initial.mean, real.initial_p_euclidean, real.timeline, cfg);
      estimates = res.projected;
    }
    const Metrics metrics = compute_metrics(real.truth, estimates);

    std::ostringstream csv;
    csv << "step,time_s,region,truth_px,truth_py,truth_pz,truth_vx,truth_vy,"
           "truth_vz,est_px,est_py,est_pz,est_vx,est_vy,est_vz,pos_error,"
           "vel_error,orient_error,nees\n";
    for (size_t n = 0; n < estimates.size(); ++n) {
      const UeState& t = real.truth[n + 1];
      const UeState& e = estimates[n];
      csv << (n + 1) << "," << fmt((n + 1) * sc.frame.update_interval_s) << ","
          << real.metrics_region[n];
      for (int i = 0; i < 3; ++i) csv << "," << fmt(t.p[i]);
      for (int i = 0; i < 3; ++i) csv << "," << fmt(t.v[i]);
      for (int i = 0; i < 3; ++i) csv << "," << fmt(e.p[i]);
      for (int i = 0; i < 3; ++i) csv << "," << fmt(e.v[i]);
      csv << "," << fmt(metrics.per_step[n].pos) << ","
          << fmt(metrics.per_step[n].vel) << ","
          << fmt(metrics.per_step[n].orient) << ","
          << (nees_per_step.empty() ? "" : fmt(nees_per_step[n])) << "\n";
    }
    write_file(fs::path(out_dir) / "track.csv", csv.str());

    // Region RMSE for the single run.
    std::map<std::string, RegionStats> by_region;
    std::map<std::string, Eigen::Vector4d> acc;
    for (size_t n = 0; n < metrics.per_step.size(); ++n) {
      for (const std::string key :
           {real.metrics_region[n], std::string("overall")}) {
        Eigen::Vector4d& a = acc[key];
        a[0] += metrics.per_step[n].pos * metrics.per_step[n].pos;
        a[1] += metrics.per_step[n].vel * metrics.per_step[n].vel;
        a[2] += metrics.per_step[n].orient * metrics.per_step[n].orient;
        a[3] += 1.0;
      }
    }
    for (const auto& [key, a] : acc) {
      RegionStats st;
      st.pos_rmse = std::sqrt(a[0] / a[3]);
      st.vel_rmse = std::sqrt(a[1] / a[3]);
      st.orient_rmse = std::sqrt(a[2] / a[3]);
      st.count = static_cast<int>(a[3]);
      by_region[key] = st;
    }
    const double runtime =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - t0)
            .count();
    json summary = {{"variant", variant.name()},
                    {"seed", seed},
                    {"steps", sc.steps},
                    {"rmse", region_summary(by_region)},
                    {"runtime_s", runtime}};
    write_file(fs::path(out_dir) / "summary.json", summary.dump(2) + "\n");
  } catch (const std::exception& e) {
    std::cerr << "runtime error: " << e.what() << "\n";
    return kExitRuntime;
  }
  return 0;
}

int cmd_crb_sweep(const std::string& scenario_path, bool paper_scale,
                  uint64_t seed, const std::string& out_dir,
                  const std::string& g_list, const std::string& s_list,
                  const std::string& k_list, const std::string& region_list) {
  Scenario sc;
  std::vector<int> gs, ss, ks;
  std::vector<std::string> regions;
  try {
    sc = resolve_scenario(scenario_path, paper_scale);
    gs = split_ints(g_list);
    ss = split_ints(s_list);
    ks = split_ints(k_list);
    regions = split_list(region_list);
    if (gs.empty() || ss.empty() || ks.empty() || regions.empty()) {
      throw Error("empty sweep grid");
    }
    fs::create_directories(out_dir);
  } catch (const std::exception& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return kExitConfig;
  }
  try {
    const std::vector<CrbPoint> points =
        crb_sweep(sc, gs, ss, ks, regions, seed);
    std::ostringstream csv;
    csv << "G,S,K,region,crb_phi_d\n";
    for (const CrbPoint& p : points) {
      csv << p.transmissions << "," << p.sats << "," << p.subcarriers << ","
          << p.region << "," << fmt(p.crb_phi_d) << "\n";
    }
    write_file(fs::path(out_dir) / "crb.csv", csv.str());
  } catch (const std::exception& e) {
    std::cerr << "runtime error: " << e.what() << "\n";
    return kExitRuntime;
  }
  return 0;
}

int cmd_montecarlo(const std::string& scenario_path, bool paper_scale,
                   uint64_t seed, const std::string& out_dir, int trials,
                   const std::string& filter_list,
                   const std::string& belief_list) {
  Scenario sc;
  std::vector<VariantSpec> variants;
  try {
    sc = resolve_scenario(scenario_path, paper_scale);
    if (trials < 1) throw Error("trials must be >= 1");
    for (const std::string& f : split_list(filter_list)) {
      for (const std::string& b : split_list(belief_list)) {
        variants.push_back(parse_variant(f, b));
      }
    }
    if (variants.empty()) throw Error("no variants selected");
    fs::create_directories(out_dir);
  } catch (const std::exception& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return kExitConfig;
  }

  try {
    const MonteCarloResult result =
        run_monte_carlo(sc, trials, variants, seed, true);

    std::ostringstream csv;
    csv << "trial,step,variant,region,pos_error,vel_error,orient_error\n";
    for (const TrialVariantResult& row : result.rows) {
      if (!row.ok) continue;
      for (size_t n = 0; n < row.errors.size(); ++n) {
        csv << row.trial << "," << (n + 1) << "," << row.variant << ","
            << result.metrics_region[n] << "," << fmt(row.errors[n].pos) << ","
            << fmt(row.errors[n].vel) << "," << fmt(row.errors[n].orient)
            << "\n";
      }
    }
    write_file(fs::path(out_dir) / "metrics.csv", csv.str());

    // Empirical CDFs over steps and trials per variant and metric.
    std::ostringstream cdf;
    cdf << "variant,metric,value,cdf\n";
    std::vector<std::string> names;
    for (const VariantSpec& v : variants) names.push_back(v.name());
    for (const std::string& name : names) {
      for (const std::string metric : {"pos", "vel", "orient"}) {
        std::vector<double> samples;
        for (const TrialVariantResult& row : result.rows) {
          if (!row.ok || row.variant != name) continue;
          for (const StepError& e : row.errors) {
            samples.push_back(metric == "pos" ? e.pos
                              : metric == "vel" ? e.vel
                                                : e.orient);
          }
        }
        std::sort(samples.begin(), samples.end());
        for (size_t i = 0; i < samples.size(); ++i) {
          cdf << name << "," << metric << "," << fmt(samples[i]) << ","
              << fmt(static_cast<double>(i + 1) / samples.size()) << "\n";
        }
      }
    }
    write_file(fs::path(out_dir) / "cdf.csv", cdf.str());

    json summary;
    summary["seed"] = seed;
    summary["trials"] = trials;
    summary["steps"] = sc.steps;
    for (const auto& [variant, by_region] : result.summary) {
      summary["variants"][variant] = region_summary(by_region);
    }
    summary["failures"] = result.failures;
    write_file(fs::path(out_dir) / "summary.json", summary.dump(2) + "\n");

    size_t failed = 0;
    for (const TrialVariantResult& row : result.rows) {
      if (!row.ok) ++failed;
    }
    if (failed == result.rows.size()) {
      std::cerr << "all trials failed\n";
      return kExitRuntime;
    }
  } catch (const std::exception& e) {
    std::cerr << "runtime error: " << e.what() << "\n";
    return kExitRuntime;
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  apply_thread_cap();

  CLI::App app{"LEO+RIS 9D tracking simulator"};
  app.require_subcommand(1);

  std::string scenario_path, out_dir = "out";
  uint64_t seed = 1;
  bool paper_scale = false;
  std::string filter = "riemannian", belief = "fim_approx";
  int trials = 20;
  std::string g_list = "4,8,16,32", s_list = "1,2,3,4,5", k_list;
  std::string region_list = "rural,urban";

  auto add_common = [&](CLI::App* cmd) {
    cmd->add_option("--scenario", scenario_path, "Scenario JSON file");
    cmd->add_option("--seed", seed, "Root seed");
    cmd->add_option("--out", out_dir, "Output directory");
    cmd->add_flag("--paper-scale", paper_scale,
                  "Use the paper-scale profile (S=5, R=2, K=3000, G=32)");
  };

  CLI::App* trk = app.add_subcommand("track", "Run one tracking trial");
  add_common(trk);
  trk->add_option("--variant", filter, "riemannian|euclidean");
  trk->add_option("--belief", belief, "identity|fim_approx|oracle");

  CLI::App* crb = app.add_subcommand("crb-sweep", "CRB of the RIS AoDs");
  add_common(crb);
  crb->add_option("--g", g_list, "Comma list of transmission counts");
  crb->add_option("--s", s_list, "Comma list of satellite counts");
  crb->add_option("--k", k_list, "Comma list of subcarrier counts");
  crb->add_option("--regions", region_list, "Comma list of regions");

  CLI::App* mc = app.add_subcommand("montecarlo", "Monte Carlo experiment");
  add_common(mc);
  mc->add_option("--trials", trials, "Number of trials");
  mc->add_option("--variant", filter, "Comma list: riemannian,euclidean");
  mc->add_option("--belief", belief,
                 "Comma list: identity,fim_approx,oracle");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    if (e.get_exit_code() == 0) return app.exit(e);  // --help
    app.exit(e);
    return kExitConfig;
  }

  if (trk->parsed()) {
    return cmd_track(scenario_path, paper_scale, seed, out_dir, filter,
                     belief);
  }
  if (crb->parsed()) {
    if (k_list.empty()) {
      k_list = std::to_string(
          (paper_scale ? Scenario::paper_default() : Scenario::desk_default())
              .frame.subcarriers);
    }
    return cmd_crb_sweep(scenario_path, paper_scale, seed, out_dir, g_list,
                         s_list, k_list, region_list);
  }
  return cmd_montecarlo(scenario_path, paper_scale, seed, out_dir, trials,
                        filter, belief);
}
