#pragma once

#include <filesystem>
#include <fstream>
#include <iomanip>
#include <ostream>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "jape/montecarlo.hpp"
#include "jape/scenario.hpp"

// Report writers: per-epoch CSV time series, a versioned JSON campaign
// summary, and a plain-text table of final errors per estimator.

namespace jape {

inline constexpr int kSummarySchemaVersion = 1;

namespace detail {

inline std::string csv_num(double v) { return fmt_double(v); }

inline void require_stream(const std::ostream& os, const std::string& what) {
  if (!os) throw IoError("failed writing " + what);
}

inline nlohmann::json moments_json(const Moments& m,
                                   const char* const (&axes)[3]) {
  return {{"axes", {axes[0], axes[1], axes[2]}},
          {"mean", {m.mean(0), m.mean(1), m.mean(2)}},
          {"sigma", {m.sigma(0), m.sigma(1), m.sigma(2)}}};
}

inline std::string mean_sigma(double mean, double sigma) {
  std::ostringstream os;
  os << std::setprecision(2) << std::fixed << mean << "+-" << sigma;
  return os.str();
}

inline std::string triple_cell(const Moments& m) {
  return "[" + mean_sigma(m.mean(0), m.sigma(0)) + " " +
         mean_sigma(m.mean(1), m.sigma(1)) + " " +
         mean_sigma(m.mean(2), m.sigma(2)) + "]";
}

}  // namespace detail

/// Per-epoch time series of one run. Attitude errors are Euler-angle
/// differences (yaw, pitch, roll); bias columns are raw estimates in SI.
inline void write_epoch_csv(std::ostream& os, const RunReport& rep) {
  os << "t,err_yaw_deg,err_pitch_deg,err_roll_deg,"
        "ba_x,ba_y,ba_z,bg_x,bg_y,bg_z,"
        "lever_err_x_mm,lever_err_y_mm,lever_err_z_mm,"
        "objective,objective_at_truth,iters\n";
  for (const auto& r : rep.epochs) {
    os << detail::csv_num(r.t) << ',' << detail::csv_num(r.err_yaw_deg) << ','
       << detail::csv_num(r.err_pitch_deg) << ','
       << detail::csv_num(r.err_roll_deg) << ',' << detail::csv_num(r.ba(0))
       << ',' << detail::csv_num(r.ba(1)) << ',' << detail::csv_num(r.ba(2))
       << ',' << detail::csv_num(r.bg(0)) << ',' << detail::csv_num(r.bg(1))
       << ',' << detail::csv_num(r.bg(2)) << ','
       << detail::csv_num(r.lever_err_mm(0)) << ','
       << detail::csv_num(r.lever_err_mm(1)) << ','
       << detail::csv_num(r.lever_err_mm(2)) << ','
       << detail::csv_num(r.objective) << ','
       << detail::csv_num(r.objective_at_truth) << ',' << r.iters << '\n';
  }
  detail::require_stream(os, "epoch CSV");
}

/// Per-run final errors of a campaign, one row per run index.
inline void write_finals_csv(std::ostream& os, const CampaignSummary& s) {
  if (s.finals.empty()) throw IoError("campaign has no runs to report");
  os << "run,att_yaw_mdeg,att_pitch_mdeg,att_roll_mdeg,"
        "ba_err_x_ug,ba_err_y_ug,ba_err_z_ug,"
        "bg_err_x_dph,bg_err_y_dph,bg_err_z_dph,"
        "lever_err_x_mm,lever_err_y_mm,lever_err_z_mm,"
        "objective,objective_at_truth\n";
  for (std::size_t i = 0; i < s.finals.size(); ++i) {
    const FinalEstimate& f = s.finals[i];
    os << i;
    for (int a = 0; a < 3; ++a) os << ',' << detail::csv_num(f.att_err_mdeg(a));
    for (int a = 0; a < 3; ++a)
      os << ',' << detail::csv_num(f.ba_err_micro_g(a));
    for (int a = 0; a < 3; ++a)
      os << ',' << detail::csv_num(f.bg_err_deg_per_h(a));
    for (int a = 0; a < 3; ++a) os << ',' << detail::csv_num(f.lever_err_mm(a));
    os << ',' << detail::csv_num(f.objective) << ','
       << detail::csv_num(f.objective_at_truth) << '\n';
  }
  detail::require_stream(os, "finals CSV");
}

inline nlohmann::json summary_json(const CampaignSummary& s) {
  if (s.runs == 0) throw IoError("campaign has no runs to report");
  nlohmann::json j;
  j["schema_version"] = kSummarySchemaVersion;
  j["estimator"] = s.estimator;
  j["runs"] = s.runs;
  j["seed"] = s.seed;
  j["seed_stride"] = s.seed_stride;
  j["duration_s"] = s.duration_s;
  j["wall_s"] = s.wall_s;
  j["final_errors"] = {
      {"attitude_milli_deg",
       detail::moments_json(s.att_mdeg, {"yaw", "pitch", "roll"})},
      {"accelerometer_bias_micro_g",
       detail::moments_json(s.ba_micro_g, {"x", "y", "z"})},
      {"gyro_bias_deg_per_h",
       detail::moments_json(s.bg_deg_per_h, {"x", "y", "z"})},
      {"gps_lever_arm_mm",
       detail::moments_json(s.lever_mm, {"x", "y", "z"})}};
  j["objective_dominance_violations"] = s.dominance_violations;
  return j;
}

/// Plain-text table of final errors (1 sigma), one column per estimator.
inline void write_table(std::ostream& os,
                        const std::vector<CampaignSummary>& summaries) {
  if (summaries.empty()) throw IoError("no campaigns to tabulate");
  const int w = 34;
  os << "Final estimate errors (mean +- 1 sigma), " << summaries[0].runs
     << " runs, " << summaries[0].duration_s << " s\n\n";
  os << std::left << std::setw(w) << "Quantity";
  for (const auto& s : summaries) os << std::setw(w) << s.estimator;
  os << '\n';
  const auto row = [&](const std::string& label, auto pick) {
    os << std::setw(w) << label;
    for (const auto& s : summaries)
      os << std::setw(w) << detail::triple_cell(pick(s));
    os << '\n';
  };
  row("Attitude (milli-deg)",
      [](const CampaignSummary& s) { return s.att_mdeg; });
  row("Accelerometer bias (micro-g)",
      [](const CampaignSummary& s) { return s.ba_micro_g; });
  row("Gyro bias (deg/h)",
      [](const CampaignSummary& s) { return s.bg_deg_per_h; });
  row("Lever arm (mm)", [](const CampaignSummary& s) { return s.lever_mm; });
  detail::require_stream(os, "summary table");
}

/// Writes epoch CSV, finals CSV, JSON summary, and the text table under
/// `dir`, one file set per estimator summary. Throws before creating any
/// file if there is nothing to write.
inline void emit_report(const std::filesystem::path& dir,
                        const std::vector<CampaignSummary>& summaries,
                        const std::vector<RunReport>& sample_runs = {}) {
  if (summaries.empty()) throw IoError("empty campaign: nothing to emit");
  for (const auto& s : summaries)
    if (s.runs == 0) throw IoError("campaign has no runs to report");
  std::error_code ec;
  std::filesystem::create_directories(dir, ec);
  if (ec) throw IoError("cannot create output directory " + dir.string());

  for (const auto& s : summaries) {
    {
      std::ofstream f(dir / ("summary_" + s.estimator + ".json"));
      if (!f) throw IoError("cannot open summary JSON for " + s.estimator);
      f << summary_json(s).dump(2) << '\n';
      detail::require_stream(f, "summary JSON");
    }
    std::ofstream f(dir / ("finals_" + s.estimator + ".csv"));
    if (!f) throw IoError("cannot open finals CSV for " + s.estimator);
    write_finals_csv(f, s);
  }
  {
    std::ofstream f(dir / "table.txt");
    if (!f) throw IoError("cannot open summary table");
    write_table(f, summaries);
  }
  for (const auto& r : sample_runs) {
    std::ofstream f(dir / ("epochs_" + r.estimator + "_run" +
                           std::to_string(r.run_index) + ".csv"));
    if (!f) throw IoError("cannot open epoch CSV");
    write_epoch_csv(f, r);
  }
}

}  // namespace jape
