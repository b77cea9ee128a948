#pragma once

#include <atomic>
#include <cstdint>
#include <exception>
#include <mutex>
#include <string>
#include <thread>
#include <vector>

#include "jape/scenario.hpp"

// Monte Carlo campaign driver. Runs are mutually independent (run i uses
// seed = base + i * stride) and results are stored by run index, so the
// summary is identical whatever the worker count.

namespace jape {

struct Moments {
  Vector3d mean = Vector3d::Zero();
  Vector3d sigma = Vector3d::Zero();
};

struct CampaignSummary {
  std::string estimator;
  int runs = 0;
  std::uint64_t seed = 0;
  std::uint64_t seed_stride = 0;
  double duration_s = 0.0;
  Moments att_mdeg;      // yaw, pitch, roll final errors
  Moments ba_micro_g;    // accelerometer bias final errors
  Moments bg_deg_per_h;  // gyro bias final errors
  Moments lever_mm;      // lever arm final errors
  int dominance_violations = 0;  // runs with objective(est) > objective(truth)
  double wall_s = 0.0;
  std::vector<FinalEstimate> finals;  // by run index
};

namespace detail {

template <class Get>
Moments moments_of(const std::vector<FinalEstimate>& finals, Get get) {
  Moments m;
  const auto n = static_cast<double>(finals.size());
  if (finals.empty()) return m;
  for (const auto& f : finals) m.mean += get(f);
  m.mean /= n;
  if (finals.size() < 2) return m;
  Vector3d ss = Vector3d::Zero();
  for (const auto& f : finals) {
    const Vector3d d = get(f) - m.mean;
    ss += d.cwiseProduct(d);
  }
  m.sigma = (ss / (n - 1.0)).cwiseSqrt();
  return m;
}

}  // namespace detail

inline std::vector<RunReport> monte_carlo_runs(const ScenarioConfig& c,
                                               const std::string& kind) {
  validate_config(c);
  std::vector<RunReport> out(static_cast<std::size_t>(c.runs));
  if (c.threads <= 1) {
    for (int i = 0; i < c.runs; ++i)
      out[static_cast<std::size_t>(i)] =
          run_scenario(c, static_cast<std::uint64_t>(i), kind);
    return out;
  }

  std::atomic<int> next{0};
  std::exception_ptr failure;
  std::mutex fail_mu;
  auto worker = [&] {
    for (;;) {
      const int i = next.fetch_add(1);
      if (i >= c.runs) return;
      try {
        out[static_cast<std::size_t>(i)] =
            run_scenario(c, static_cast<std::uint64_t>(i), kind);
      } catch (...) {
        const std::lock_guard<std::mutex> lock(fail_mu);
        if (!failure) failure = std::current_exception();
        return;
      }
    }
  };
  std::vector<std::thread> pool;
  const int nthreads = std::min(c.threads, c.runs);
  pool.reserve(static_cast<std::size_t>(nthreads));
  for (int i = 0; i < nthreads; ++i) pool.emplace_back(worker);
  for (auto& th : pool) th.join();
  if (failure) std::rethrow_exception(failure);
  return out;
}

inline CampaignSummary summarize(const ScenarioConfig& c,
                                 const std::string& kind,
                                 const std::vector<RunReport>& runs,
                                 double wall_s) {
  CampaignSummary s;
  s.estimator = kind;
  s.runs = static_cast<int>(runs.size());
  s.seed = c.seed;
  s.seed_stride = c.seed_stride;
  s.duration_s = c.duration_s;
  s.wall_s = wall_s;
  s.finals.reserve(runs.size());
  for (const auto& r : runs) {
    s.finals.push_back(r.final_estimate);
    if (kind != "ekf" &&
        r.final_estimate.objective > r.final_estimate.objective_at_truth)
      ++s.dominance_violations;
  }
  s.att_mdeg = detail::moments_of(
      s.finals, [](const FinalEstimate& f) { return f.att_err_mdeg; });
  s.ba_micro_g = detail::moments_of(
      s.finals, [](const FinalEstimate& f) { return f.ba_err_micro_g; });
  s.bg_deg_per_h = detail::moments_of(
      s.finals, [](const FinalEstimate& f) { return f.bg_err_deg_per_h; });
  s.lever_mm = detail::moments_of(
      s.finals, [](const FinalEstimate& f) { return f.lever_err_mm; });
  return s;
}

inline CampaignSummary monte_carlo(const ScenarioConfig& c,
                                   const std::string& kind) {
  const auto wall0 = std::chrono::steady_clock::now();
  const auto runs = monte_carlo_runs(c, kind);
  const double wall = std::chrono::duration<double>(
                          std::chrono::steady_clock::now() - wall0)
                          .count();
  return summarize(c, kind, runs, wall);
}

}  // namespace jape
