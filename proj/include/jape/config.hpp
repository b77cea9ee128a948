#pragma once

#include <charconv>
#include <cstdint>
#include <fstream>
#include <functional>
#include <istream>
#include <sstream>
#include <string>
#include <vector>

#include "jape/ekf.hpp"
#include "jape/estimator.hpp"
#include "jape/sim.hpp"

// Scenario configuration: a flat "section.key = value" text format with units
// encoded in the key names. All angles are degrees in the file and radians in
// memory; sensor grades use the customary deg/h and micro-g units.
//
// Oscillation channels take three values: amplitude, frequency in Hz, and
// phase in radians; amplitude units are degrees for attitude channels and
// m/s for velocity channels.

namespace jape {

struct ScenarioConfig {
  MotionProfile profile;
  SensorSpec sensors;
  double duration_s = 300.0;
  std::string estimator = "ra-jape";
  int runs = 50;
  std::uint64_t seed = 1;
  std::uint64_t seed_stride = 1;
  int threads = 1;
  int record_stride = 10;
  int ba_stride = 50;
  JapeOptions jape;
  EkfOptions ekf;
};

/// The default desk scenario: oscillatory attitude/velocity at latitude 30
/// degrees, tactical-grade sensor errors, and a [1 2 1.5] m antenna offset.
inline ScenarioConfig default_config() {
  ScenarioConfig c;
  c.profile.p0.lat = 30.0 * units::kDeg;
  c.profile.p0.lon = 0.0;
  c.profile.p0.h = 50.0;
  c.profile.yaw0 = 20.0 * units::kDeg;
  c.profile.pitch0 = 0.0;
  c.profile.roll0 = 0.0;
  c.profile.yaw = {7.0 * units::kDeg, 0.20, 0.0};
  c.profile.pitch = {7.0 * units::kDeg, 0.15, 1.0};
  c.profile.roll = {7.0 * units::kDeg, 0.17, 2.0};
  c.profile.vel_n = {2.0, 0.10, 0.0};
  c.profile.vel_u = {2.0, 0.10, 2.1};
  c.profile.vel_e = {2.0, 0.10, 4.2};
  c.sensors.gyro_bias = Vector3d::Constant(0.01 * units::kDegPerHour);
  c.sensors.accel_bias = Vector3d::Constant(50.0 * units::kMicroG);
  c.sensors.gyro_noise_density = 0.1 * units::kDegPerHour;
  c.sensors.accel_noise_density = 5.0 * units::kMicroG;
  c.sensors.imu_rate_hz = 100.0;
  c.sensors.gnss_rate_hz = 50.0;
  c.sensors.gnss_pos_sigma = 0.2;
  c.sensors.gnss_vel_sigma = 0.02;
  c.sensors.lever_arm = {1.0, 2.0, 1.5};
  return c;
}

namespace detail {

struct ConfigKey {
  std::string name;
  std::function<std::string(const ScenarioConfig&)> get;
  std::function<void(ScenarioConfig&, const std::string&)> set;
};

inline std::string trim(const std::string& s) {
  const auto a = s.find_first_not_of(" \t\r");
  if (a == std::string::npos) return "";
  const auto b = s.find_last_not_of(" \t\r");
  return s.substr(a, b - a + 1);
}

inline std::string fmt_double(double v) {
  char buf[32];
  const auto res = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, res.ptr);
}

/// Formats raw/unit with the fewest digits that reproduce `raw` exactly when
/// scaled back, so unit conversion does not leak rounding artifacts into the
/// printed file.
inline std::string fmt_scaled(double raw, double unit) {
  const double v = raw / unit;
  char buf[32];
  for (int prec = 1; prec <= 17; ++prec) {
    const auto res =
        std::to_chars(buf, buf + sizeof buf, v, std::chars_format::general,
                      prec);
    const double candidate = std::stod(std::string(buf, res.ptr));
    if (candidate * unit == raw) return fmt_double(candidate);
  }
  return fmt_double(v);
}

inline double parse_double(const std::string& s) {
  std::size_t used = 0;
  double v = 0.0;
  try {
    v = std::stod(s, &used);
  } catch (const std::exception&) {
    throw ConfigError("bad numeric value '" + s + "'");
  }
  if (trim(s.substr(used)) != "")
    throw ConfigError("trailing characters in value '" + s + "'");
  return v;
}

inline Vector3d parse_triple(const std::string& s) {
  std::istringstream in(s);
  std::string a, b, c, rest;
  if (!(in >> a >> b >> c) || (in >> rest))
    throw ConfigError("expected three values, got '" + s + "'");
  return {parse_double(a), parse_double(b), parse_double(c)};
}

inline const std::vector<ConfigKey>& config_keys() {
  auto dbl = [](std::string name, auto ref, double unit = 1.0) {
    return ConfigKey{
        std::move(name),
        [ref, unit](const ScenarioConfig& c) {
          return fmt_scaled(ref(const_cast<ScenarioConfig&>(c)), unit);
        },
        [ref, unit](ScenarioConfig& c, const std::string& s) {
          ref(c) = parse_double(s) * unit;
        }};
  };
  auto integer = [](std::string name, auto ref) {
    return ConfigKey{
        std::move(name),
        [ref](const ScenarioConfig& c) {
          return std::to_string(ref(const_cast<ScenarioConfig&>(c)));
        },
        [ref](ScenarioConfig& c, const std::string& s) {
          const double v = parse_double(s);
          if (v != static_cast<double>(static_cast<long long>(v)))
            throw ConfigError("expected an integer, got '" + s + "'");
          ref(c) = static_cast<std::decay_t<decltype(ref(c))>>(v);
        }};
  };
  auto osc = [](std::string name, auto ref, double unit) {
    return ConfigKey{
        std::move(name),
        [ref, unit](const ScenarioConfig& c) {
          const AxisOsc& o = ref(const_cast<ScenarioConfig&>(c));
          return fmt_scaled(o.amp, unit) + " " + fmt_double(o.freq_hz) +
                 " " + fmt_double(o.phase);
        },
        [ref, unit](ScenarioConfig& c, const std::string& s) {
          const Vector3d v = parse_triple(s);
          ref(c) = AxisOsc{v(0) * unit, v(1), v(2)};
        }};
  };
  auto vec = [](std::string name, auto ref, double unit = 1.0) {
    return ConfigKey{
        std::move(name),
        [ref, unit](const ScenarioConfig& c) {
          const Vector3d& v = ref(const_cast<ScenarioConfig&>(c));
          return fmt_scaled(v(0), unit) + " " + fmt_scaled(v(1), unit) +
                 " " + fmt_scaled(v(2), unit);
        },
        [ref, unit](ScenarioConfig& c, const std::string& s) {
          ref(c) = parse_triple(s) * unit;
        }};
  };

  const double kDeg = units::kDeg;
  const double kDph = units::kDegPerHour;
  const double kUg = units::kMicroG;
  static const std::vector<ConfigKey> keys = {
      dbl("profile.lat_deg",
          [](ScenarioConfig& c) -> double& { return c.profile.p0.lat; }, kDeg),
      dbl("profile.lon_deg",
          [](ScenarioConfig& c) -> double& { return c.profile.p0.lon; }, kDeg),
      dbl("profile.height_m",
          [](ScenarioConfig& c) -> double& { return c.profile.p0.h; }),
      dbl("profile.yaw0_deg",
          [](ScenarioConfig& c) -> double& { return c.profile.yaw0; }, kDeg),
      dbl("profile.pitch0_deg",
          [](ScenarioConfig& c) -> double& { return c.profile.pitch0; }, kDeg),
      dbl("profile.roll0_deg",
          [](ScenarioConfig& c) -> double& { return c.profile.roll0; }, kDeg),
      osc("profile.yaw_osc_deg_hz_rad",
          [](ScenarioConfig& c) -> AxisOsc& { return c.profile.yaw; }, kDeg),
      osc("profile.pitch_osc_deg_hz_rad",
          [](ScenarioConfig& c) -> AxisOsc& { return c.profile.pitch; }, kDeg),
      osc("profile.roll_osc_deg_hz_rad",
          [](ScenarioConfig& c) -> AxisOsc& { return c.profile.roll; }, kDeg),
      osc("profile.vel_n_osc_mps_hz_rad",
          [](ScenarioConfig& c) -> AxisOsc& { return c.profile.vel_n; }, 1.0),
      osc("profile.vel_u_osc_mps_hz_rad",
          [](ScenarioConfig& c) -> AxisOsc& { return c.profile.vel_u; }, 1.0),
      osc("profile.vel_e_osc_mps_hz_rad",
          [](ScenarioConfig& c) -> AxisOsc& { return c.profile.vel_e; }, 1.0),
      vec("sensors.gyro_bias_deg_per_h",
          [](ScenarioConfig& c) -> Vector3d& { return c.sensors.gyro_bias; },
          kDph),
      vec("sensors.accel_bias_micro_g",
          [](ScenarioConfig& c) -> Vector3d& { return c.sensors.accel_bias; },
          kUg),
      dbl("sensors.gyro_noise_deg_per_h_sqrt_hz",
          [](ScenarioConfig& c) -> double& {
            return c.sensors.gyro_noise_density;
          },
          kDph),
      dbl("sensors.accel_noise_micro_g_sqrt_hz",
          [](ScenarioConfig& c) -> double& {
            return c.sensors.accel_noise_density;
          },
          kUg),
      dbl("sensors.imu_rate_hz",
          [](ScenarioConfig& c) -> double& { return c.sensors.imu_rate_hz; }),
      dbl("sensors.gnss_rate_hz",
          [](ScenarioConfig& c) -> double& { return c.sensors.gnss_rate_hz; }),
      dbl("sensors.gnss_pos_sigma_m",
          [](ScenarioConfig& c) -> double& {
            return c.sensors.gnss_pos_sigma;
          }),
      dbl("sensors.gnss_vel_sigma_mps",
          [](ScenarioConfig& c) -> double& {
            return c.sensors.gnss_vel_sigma;
          }),
      vec("sensors.lever_arm_m",
          [](ScenarioConfig& c) -> Vector3d& { return c.sensors.lever_arm; }),
      dbl("run.duration_s",
          [](ScenarioConfig& c) -> double& { return c.duration_s; }),
      ConfigKey{"run.estimator",
                [](const ScenarioConfig& c) { return c.estimator; },
                [](ScenarioConfig& c, const std::string& s) {
                  const std::string v = trim(s);
                  if (v != "ra-jape" && v != "ba-jape" && v != "ekf" &&
                      v != "all")
                    throw ConfigError("unknown estimator '" + v + "'");
                  c.estimator = v;
                }},
      integer("run.count",
              [](ScenarioConfig& c) -> int& { return c.runs; }),
      integer("run.seed",
              [](ScenarioConfig& c) -> std::uint64_t& { return c.seed; }),
      integer("run.seed_stride",
              [](ScenarioConfig& c) -> std::uint64_t& {
                return c.seed_stride;
              }),
      integer("run.threads",
              [](ScenarioConfig& c) -> int& { return c.threads; }),
      integer("run.record_stride",
              [](ScenarioConfig& c) -> int& { return c.record_stride; }),
      integer("run.ba_stride",
              [](ScenarioConfig& c) -> int& { return c.ba_stride; }),
      integer("estimator.window",
              [](ScenarioConfig& c) -> int& { return c.jape.window; }),
      dbl("estimator.period_s",
          [](ScenarioConfig& c) -> double& { return c.jape.period; }),
      dbl("estimator.warmup_s",
          [](ScenarioConfig& c) -> double& { return c.jape.warmup_s; }),
      integer("estimator.max_iters",
              [](ScenarioConfig& c) -> int& { return c.jape.solve.max_iters; }),
      dbl("estimator.tol",
          [](ScenarioConfig& c) -> double& { return c.jape.solve.tol; }),
      integer("estimator.step_guard",
              [](ScenarioConfig& c) -> bool& {
                return c.jape.solve.step_guard;
              }),
      dbl("ekf.att_level_sigma_deg",
          [](ScenarioConfig& c) -> double& { return c.ekf.att_level_sigma; },
          kDeg),
      dbl("ekf.att_heading_sigma_deg",
          [](ScenarioConfig& c) -> double& { return c.ekf.att_heading_sigma; },
          kDeg),
      dbl("ekf.vel_sigma_mps",
          [](ScenarioConfig& c) -> double& { return c.ekf.vel_sigma; }),
      dbl("ekf.pos_sigma_m",
          [](ScenarioConfig& c) -> double& { return c.ekf.pos_sigma; }),
      dbl("ekf.bg_sigma_deg_per_h",
          [](ScenarioConfig& c) -> double& { return c.ekf.bg_sigma; }, kDph),
      dbl("ekf.ba_sigma_micro_g",
          [](ScenarioConfig& c) -> double& { return c.ekf.ba_sigma; }, kUg),
      dbl("ekf.lever_sigma_m",
          [](ScenarioConfig& c) -> double& { return c.ekf.lever_sigma; }),
      dbl("ekf.gate",
          [](ScenarioConfig& c) -> double& { return c.ekf.gate; }),
  };
  return keys;
}

}  // namespace detail

/// Checks the cross-field invariants that individual key setters cannot see.
inline void validate_config(const ScenarioConfig& c) {
  if (c.duration_s <= 0.0) throw ConfigError("run.duration_s must be > 0");
  if (c.duration_s < c.jape.warmup_s)
    throw ConfigError("run.duration_s must cover estimator.warmup_s");
  if (c.runs < 1) throw ConfigError("run.count must be >= 1");
  if (c.threads < 1) throw ConfigError("run.threads must be >= 1");
  if (c.record_stride < 1 || c.ba_stride < 1)
    throw ConfigError("strides must be >= 1");
  if (c.sensors.imu_rate_hz <= 0.0 || c.sensors.gnss_rate_hz <= 0.0)
    throw ConfigError("sensor rates must be > 0");
  if (std::abs(c.sensors.imu_rate_hz - 2.0 * c.sensors.gnss_rate_hz) > 1e-9)
    throw ConfigError("sensors.imu_rate_hz must be twice gnss_rate_hz");
  if (std::abs(c.jape.period * c.sensors.gnss_rate_hz - 1.0) > 1e-9)
    throw ConfigError("estimator.period_s must match the GNSS rate");
  if (c.sensors.gnss_pos_sigma < 0.0 || c.sensors.gnss_vel_sigma < 0.0 ||
      c.sensors.gyro_noise_density < 0.0 ||
      c.sensors.accel_noise_density < 0.0)
    throw ConfigError("noise parameters must be >= 0");
  if (c.jape.window < 1) throw ConfigError("estimator.window must be >= 1");
  if (c.jape.solve.max_iters < 1)
    throw ConfigError("estimator.max_iters must be >= 1");
}

inline ScenarioConfig parse_config(std::istream& in) {
  ScenarioConfig c = default_config();
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line.erase(hash);
    const std::string body = detail::trim(line);
    if (body.empty()) continue;
    const auto eq = body.find('=');
    if (eq == std::string::npos)
      throw ConfigError("line " + std::to_string(lineno) +
                        ": expected 'key = value'");
    const std::string key = detail::trim(body.substr(0, eq));
    const std::string value = detail::trim(body.substr(eq + 1));
    bool found = false;
    for (const auto& k : detail::config_keys()) {
      if (k.name == key) {
        try {
          k.set(c, value);
        } catch (const ConfigError& e) {
          throw ConfigError("line " + std::to_string(lineno) + ", " + key +
                            ": " + e.what());
        }
        found = true;
        break;
      }
    }
    if (!found)
      throw ConfigError("line " + std::to_string(lineno) +
                        ": unknown key '" + key + "'");
  }
  validate_config(c);
  return c;
}

inline ScenarioConfig parse_config(const std::string& text) {
  std::istringstream in(text);
  return parse_config(in);
}

inline ScenarioConfig load_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open config file '" + path + "'");
  return parse_config(in);
}

/// Emits every key with its current value; the output parses back to an
/// identical configuration.
inline std::string print_config(const ScenarioConfig& c) {
  std::ostringstream out;
  out << "# Scenario configuration. Units are encoded in key names;\n"
         "# oscillation channels are 'amplitude frequency_hz phase_rad'.\n";
  std::string section;
  for (const auto& k : detail::config_keys()) {
    const std::string s = k.name.substr(0, k.name.find('.'));
    if (s != section) {
      out << "\n";
      section = s;
    }
    out << k.name << " = " << k.get(c) << "\n";
  }
  return out.str();
}

}  // namespace jape
