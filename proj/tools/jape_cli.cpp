// Command-line harness: scenario simulation, single-run estimation,
// Monte Carlo campaigns, and the recursive/batch equivalence crosscheck.

#include <algorithm>
#include <chrono>
#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "jape/config.hpp"
#include "jape/montecarlo.hpp"
#include "jape/report.hpp"
#include "jape/scenario.hpp"

namespace {

using jape::ScenarioConfig;
using jape::Vector3d;

std::string fmt_time(double t) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.9f", t);
  return buf;
}

std::string fmt(double v) { return jape::detail::fmt_double(v); }

ScenarioConfig load(const std::string& path) {
  if (path.empty()) return jape::default_config();
  return jape::load_config(path);
}

std::ofstream open_out(const std::filesystem::path& p) {
  std::ofstream f(p);
  if (!f) throw jape::IoError("cannot open " + p.string());
  return f;
}

std::vector<std::string> expand_estimators(const std::string& sel) {
  if (sel == "all") return {"ra-jape", "ba-jape", "ekf"};
  return {sel};
}

void write_truth_csv(std::ostream& os, const ScenarioConfig& c) {
  os << "t,lon_rad,lat_rad,h_m,v_n_mps,v_u_mps,v_e_mps,"
        "yaw_deg,pitch_deg,roll_deg\n";
  const double T = 1.0 / c.sensors.gnss_rate_hz;
  const auto n = static_cast<long long>(std::llround(c.duration_s / T));
  for (long long k = 0; k <= n; ++k) {
    const jape::NavTruth s = jape::truth_at(c.profile, k * T);
    const Vector3d e = jape::dcm_to_euler_nue(s.Cbn) / jape::units::kDeg;
    os << fmt_time(s.t) << ',' << fmt(s.p.lon) << ',' << fmt(s.p.lat) << ','
       << fmt(s.p.h) << ',' << fmt(s.v(0)) << ',' << fmt(s.v(1)) << ','
       << fmt(s.v(2)) << ',' << fmt(e(0)) << ',' << fmt(e(1)) << ','
       << fmt(e(2)) << '\n';
  }
}

void write_imu_csv(std::ostream& os,
                   const std::vector<jape::ImuIncrement>& imu) {
  os << "t0,t1,"
        "dtheta1_x_rad,dtheta1_y_rad,dtheta1_z_rad,"
        "dvel1_x_mps,dvel1_y_mps,dvel1_z_mps,"
        "dtheta2_x_rad,dtheta2_y_rad,dtheta2_z_rad,"
        "dvel2_x_mps,dvel2_y_mps,dvel2_z_mps\n";
  for (const auto& s : imu) {
    os << fmt_time(s.t0) << ',' << fmt_time(s.t1);
    for (int i = 0; i < 3; ++i) os << ',' << fmt(s.dtheta1(i));
    for (int i = 0; i < 3; ++i) os << ',' << fmt(s.dvel1(i));
    for (int i = 0; i < 3; ++i) os << ',' << fmt(s.dtheta2(i));
    for (int i = 0; i < 3; ++i) os << ',' << fmt(s.dvel2(i));
    os << '\n';
  }
}

void write_gnss_csv(std::ostream& os, const std::vector<jape::GnssFix>& gnss) {
  os << "t,lon_rad,lat_rad,h_m,v_n_mps,v_u_mps,v_e_mps\n";
  for (const auto& s : gnss) {
    os << fmt_time(s.t) << ',' << fmt(s.p.lon) << ',' << fmt(s.p.lat) << ','
       << fmt(s.p.h) << ',' << fmt(s.v(0)) << ',' << fmt(s.v(1)) << ','
       << fmt(s.v(2)) << '\n';
  }
}

int cmd_simulate(const ScenarioConfig& c, const std::string& out_dir,
                 std::uint64_t run_index) {
  jape::validate_config(c);
  const std::uint64_t seed = c.seed + run_index * c.seed_stride;
  const auto imu =
      jape::synthesize_imu(c.profile, c.sensors, c.duration_s, seed);
  const auto gnss =
      jape::synthesize_gnss(c.profile, c.sensors, c.duration_s, seed);
  std::filesystem::create_directories(out_dir);
  {
    auto f = open_out(std::filesystem::path(out_dir) / "truth.csv");
    write_truth_csv(f, c);
  }
  {
    auto f = open_out(std::filesystem::path(out_dir) / "imu.csv");
    write_imu_csv(f, imu);
  }
  {
    auto f = open_out(std::filesystem::path(out_dir) / "gnss.csv");
    write_gnss_csv(f, gnss);
  }
  std::cout << "wrote truth.csv, imu.csv, gnss.csv to " << out_dir << " ("
            << imu.size() << " epochs, seed " << seed << ")\n";
  return 0;
}

void print_final(const jape::RunReport& r) {
  const jape::FinalEstimate& f = r.final_estimate;
  std::cout << r.estimator << " run " << r.run_index << " (seed " << r.seed
            << "), " << r.epochs.size() << " records, " << fmt(r.wall_s)
            << " s\n";
  std::printf("  attitude error   [%9.4f %9.4f %9.4f] milli-deg\n",
              f.att_err_mdeg(0), f.att_err_mdeg(1), f.att_err_mdeg(2));
  std::printf("  accel bias error [%9.3f %9.3f %9.3f] micro-g\n",
              f.ba_err_micro_g(0), f.ba_err_micro_g(1), f.ba_err_micro_g(2));
  std::printf("  gyro bias error  [%9.5f %9.5f %9.5f] deg/h\n",
              f.bg_err_deg_per_h(0), f.bg_err_deg_per_h(1),
              f.bg_err_deg_per_h(2));
  std::printf("  lever arm error  [%9.4f %9.4f %9.4f] mm\n",
              f.lever_err_mm(0), f.lever_err_mm(1), f.lever_err_mm(2));
  if (r.estimator != "ekf")
    std::printf("  objective %.8f (at truth %.8f), %d iterations\n",
                f.objective, f.objective_at_truth, f.iters);
}

int cmd_estimate(const ScenarioConfig& c, const std::string& out_dir,
                 std::uint64_t run_index) {
  std::filesystem::create_directories(out_dir);
  for (const std::string& kind : expand_estimators(c.estimator)) {
    const jape::RunReport rep = jape::run_scenario(c, run_index, kind);
    const auto path =
        std::filesystem::path(out_dir) /
        ("epochs_" + kind + "_run" + std::to_string(run_index) + ".csv");
    auto f = open_out(path);
    jape::write_epoch_csv(f, rep);
    print_final(rep);
    std::cout << "  series " << path.string() << "\n";
  }
  return 0;
}

int cmd_montecarlo(const ScenarioConfig& c, const std::string& out_dir) {
  std::vector<jape::CampaignSummary> summaries;
  std::vector<jape::RunReport> samples;
  for (const std::string& kind : expand_estimators(c.estimator)) {
    const auto t0 = std::chrono::steady_clock::now();
    auto runs = jape::monte_carlo_runs(c, kind);
    const double wall =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - t0)
            .count();
    summaries.push_back(jape::summarize(c, kind, runs, wall));
    samples.push_back(std::move(runs.front()));
    std::cout << kind << ": " << c.runs << " runs in " << fmt(wall) << " s\n";
  }
  jape::emit_report(out_dir, summaries, samples);
  std::cout << "\n";
  jape::write_table(std::cout, summaries);
  std::cout << "\nreports written to " << out_dir << "\n";
  return 0;
}

// Runs the batch and recursive estimators over one synthesized data set and
// checks that (a) both assemblies give the same objective, gradient, and
// Hessian at the true parameters, and (b) both converge to the same final
// estimate. Prints one line per check; exits nonzero on disagreement.
int cmd_crosscheck(ScenarioConfig c, std::uint64_t run_index) {
  jape::validate_config(c);
  c.jape.solve.max_iters = std::max(c.jape.solve.max_iters, 50);
  c.jape.solve.tol = std::min(c.jape.solve.tol, 1e-12);

  const std::uint64_t seed = c.seed + run_index * c.seed_stride;
  const auto imu =
      jape::synthesize_imu(c.profile, c.sensors, c.duration_s, seed);
  const auto gnss =
      jape::synthesize_gnss(c.profile, c.sensors, c.duration_s, seed);

  jape::EstimateX x_true;
  x_true.q = jape::dcm_to_quat(
      jape::truth_at(c.profile, 0.0).Cbn.transpose());
  x_true.ba = c.sensors.accel_bias;
  x_true.bg = c.sensors.gyro_bias;
  x_true.lever = c.sensors.lever_arm;
  const jape::Vector9d th_true = jape::pack_params(x_true);

  jape::BaJape ba(c.jape);
  jape::RaJape ra(c.jape);
  ba.start(gnss[0]);
  ra.start(gnss[0]);

  double worst = 0.0;
  const auto stride = static_cast<std::size_t>(c.ba_stride);
  for (std::size_t k = 0; k < imu.size(); ++k) {
    ba.push(imu[k], gnss[k + 1]);
    ra.push(imu[k], gnss[k + 1]);
    if (!ba.ready()) continue;
    if ((k + 1) % stride != 0 && k + 1 != imu.size()) continue;
    const jape::GradHess gb =
        jape::grad_hess_batch(ba.observations(), x_true.q, th_true);
    const jape::GradHess gr =
        ra.accumulators().grad_hess(x_true.q, th_true);
    const double df = std::abs(gb.objective - gr.objective) /
                      std::max(1.0, std::abs(gb.objective));
    const double dg =
        (gb.grad - gr.grad).norm() / std::max(1.0, gb.grad.norm());
    const double dh =
        (gb.hess - gr.hess).norm() / std::max(1.0, gb.hess.norm());
    worst = std::max({worst, df, dg, dh});
  }
  std::printf("assembly identity   max relative deviation %.3e\n", worst);

  const jape::EstimateX xb = ba.estimate();
  const jape::EstimateX xr = ra.estimate();
  const double dq = std::min((xb.q - xr.q).norm(), (xb.q + xr.q).norm());
  const double dba = (xb.ba - xr.ba).norm();
  const double dbg = (xb.bg - xr.bg).norm();
  const double dl = (xb.lever - xr.lever).norm();
  std::printf("final estimates     dq %.3e  dba %.3e  dbg %.3e  dlever %.3e\n",
              dq, dba, dbg, dl);
  std::printf("iterations          batch %d  recursive %d\n", xb.iters,
              xr.iters);

  const bool ok = worst < 1e-8 && dq < 1e-8 && dba < 1e-8 && dbg < 1e-8 &&
                  dl < 1e-8;
  std::printf("crosscheck %s (gate 1e-8)\n", ok ? "PASS" : "FAIL");
  return ok ? 0 : 1;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{
      "INS/GNSS joint initial-attitude, bias, and lever-arm estimation "
      "harness"};
  app.require_subcommand(0, 1);

  bool print_default = false;
  app.add_flag("--print-default-config", print_default,
               "print the default scenario configuration and exit");

  struct Common {
    std::string config;
    std::string out = "out";
    std::uint64_t run_index = 0;
    std::uint64_t seed = 0;
    double duration = 0.0;
    std::string estimator;
    int runs = 0;
    int threads = 0;
  };
  Common sim_o, est_o, mc_o, xc_o;

  const auto add_common = [](CLI::App* sub, Common* o, bool with_out) {
    sub->add_option("-c,--config", o->config, "scenario configuration file")
        ->check(CLI::ExistingFile);
    if (with_out)
      sub->add_option("-o,--out", o->out, "output directory")
          ->capture_default_str();
    sub->add_option("--seed", o->seed, "override run.seed");
    sub->add_option("--duration", o->duration, "override run.duration_s")
        ->check(CLI::PositiveNumber);
    sub->add_option("--run-index", o->run_index,
                    "run index (seed = base + index * stride)");
  };

  CLI::App* sim = app.add_subcommand(
      "simulate", "write truth, IMU, and GNSS series for one seed");
  add_common(sim, &sim_o, true);

  CLI::App* est = app.add_subcommand(
      "estimate", "run one estimator over one seed and write its series");
  add_common(est, &est_o, true);
  est->add_option("-e,--estimator", est_o.estimator,
                  "override run.estimator")
      ->check(CLI::IsMember({"ra-jape", "ba-jape", "ekf", "all"}));

  CLI::App* mc = app.add_subcommand(
      "montecarlo", "run a campaign and write summary reports");
  add_common(mc, &mc_o, true);
  mc->add_option("-e,--estimator", mc_o.estimator, "override run.estimator")
      ->check(CLI::IsMember({"ra-jape", "ba-jape", "ekf", "all"}));
  mc->add_option("-n,--runs", mc_o.runs, "override run.count")
      ->check(CLI::PositiveNumber);
  mc->add_option("-j,--threads", mc_o.threads, "override run.threads")
      ->check(CLI::PositiveNumber);

  CLI::App* xc = app.add_subcommand(
      "crosscheck",
      "assert batch/recursive estimator equivalence on one seed");
  add_common(xc, &xc_o, false);

  CLI11_PARSE(app, argc, argv);

  if (print_default) {
    std::cout << jape::print_config(jape::default_config());
    return 0;
  }
  if (app.get_subcommands().empty()) {
    std::cout << app.help();
    return 0;
  }

  try {
    const auto given = [](CLI::App* sub, const std::string& name) {
      const CLI::Option* opt = sub->get_option_no_throw(name);
      return opt != nullptr && opt->count() > 0;
    };
    const auto configure = [&given](CLI::App* sub, const Common& o) {
      ScenarioConfig c = load(o.config);
      if (given(sub, "--seed")) c.seed = o.seed;
      if (given(sub, "--duration")) c.duration_s = o.duration;
      if (given(sub, "--estimator")) c.estimator = o.estimator;
      if (given(sub, "--runs")) c.runs = o.runs;
      if (given(sub, "--threads")) c.threads = o.threads;
      jape::validate_config(c);
      return c;
    };
    if (sim->parsed())
      return cmd_simulate(configure(sim, sim_o), sim_o.out, sim_o.run_index);
    if (est->parsed())
      return cmd_estimate(configure(est, est_o), est_o.out, est_o.run_index);
    if (mc->parsed()) return cmd_montecarlo(configure(mc, mc_o), mc_o.out);
    if (xc->parsed())
      return cmd_crosscheck(configure(xc, xc_o), xc_o.run_index);
  } catch (const jape::Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  }
  return 0;
}
