#pragma once

// Strict key-value configuration: flat sections, every key required, unknown
// keys rejected, units encoded in the key names (degrees, meters, m/s, dBm,
// bits/s/Hz). Writing and re-parsing a configuration is an identity.

#include <fstream>
#include <map>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "nfsec/sim.hpp"

namespace nfsec::config {

struct ConfigError : std::runtime_error {
  explicit ConfigError(const std::string& what) : std::runtime_error(what) {}
};

enum class Mode { gbd, zfsca, episode, pareto, beampattern, selftest };

inline const char* to_string(Mode m) {
  switch (m) {
    case Mode::gbd: return "gbd";
    case Mode::zfsca: return "zfsca";
    case Mode::episode: return "episode";
    case Mode::pareto: return "pareto";
    case Mode::beampattern: return "beampattern";
    case Mode::selftest: return "selftest";
  }
  return "?";
}

struct RunConfig {
  std::string config_path;
  Mode mode = Mode::selftest;
  std::vector<int> gamma1_values;
  VecR gamma2_values;
  std::uint64_t seed = 0;
  std::string out_dir = ".";
  double tol = 0.0;  // 0: solver defaults
  std::string profile;  // "", "desk", "paper"
  sim::Policy policy = sim::Policy::zfsca;
};

namespace detail {

using Section = std::map<std::string, std::string>;
using Tree = std::map<std::string, Section>;

inline std::string trim(const std::string& s) {
  const auto a = s.find_first_not_of(" \t\r\n");
  if (a == std::string::npos) return "";
  const auto b = s.find_last_not_of(" \t\r\n");
  return s.substr(a, b - a + 1);
}

inline Tree parse_tree(std::istream& in) {
  Tree tree;
  std::string line, section;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    const auto hash = line.find_first_of("#;");
    if (hash != std::string::npos) line = line.substr(0, hash);
    line = trim(line);
    if (line.empty()) continue;
    if (line.front() == '[') {
      if (line.back() != ']') throw ConfigError("config line " + std::to_string(lineno) + ": malformed section");
      section = trim(line.substr(1, line.size() - 2));
      tree[section];
      continue;
    }
    const auto eq = line.find('=');
    if (eq == std::string::npos) throw ConfigError("config line " + std::to_string(lineno) + ": expected key = value");
    if (section.empty()) throw ConfigError("config line " + std::to_string(lineno) + ": key outside any section");
    const std::string key = trim(line.substr(0, eq));
    if (tree[section].count(key)) throw ConfigError("config: duplicate key [" + section + "] " + key);
    tree[section][key] = trim(line.substr(eq + 1));
  }
  return tree;
}

class Reader {
 public:
  explicit Reader(Tree tree) : tree_(std::move(tree)) {}

  const std::string& raw(const std::string& section, const std::string& key) {
    auto sit = tree_.find(section);
    if (sit == tree_.end()) throw ConfigError("config: missing section [" + section + "]");
    auto kit = sit->second.find(key);
    if (kit == sit->second.end()) throw ConfigError("config: missing key [" + section + "] " + key);
    used_[section].insert(key);
    return kit->second;
  }

  double number(const std::string& section, const std::string& key) {
    const std::string& v = raw(section, key);
    std::size_t pos = 0;
    double out = 0.0;
    try {
      out = std::stod(v, &pos);
    } catch (const std::exception&) {
      throw ConfigError("config: key [" + section + "] " + key + " is not a number: '" + v + "'");
    }
    if (pos != v.size()) throw ConfigError("config: key [" + section + "] " + key + " has trailing junk: '" + v + "'");
    return out;
  }

  double positive(const std::string& section, const std::string& key) {
    const double v = number(section, key);
    if (!(v > 0.0)) throw ConfigError("config: key [" + section + "] " + key + " must be > 0");
    return v;
  }

  long integer(const std::string& section, const std::string& key) {
    const double v = number(section, key);
    const long i = static_cast<long>(v);
    if (static_cast<double>(i) != v) throw ConfigError("config: key [" + section + "] " + key + " must be an integer");
    return i;
  }

  VecR list(const std::string& section, const std::string& key) {
    const std::string v = raw(section, key);
    std::vector<double> vals;
    std::stringstream ss(v);
    std::string item;
    while (std::getline(ss, item, ',')) {
      item = trim(item);
      if (item.empty()) throw ConfigError("config: key [" + section + "] " + key + " has an empty list entry");
      try {
        vals.push_back(std::stod(item));
      } catch (const std::exception&) {
        throw ConfigError("config: key [" + section + "] " + key + " has a non-numeric entry: '" + item + "'");
      }
    }
    if (vals.empty()) throw ConfigError("config: key [" + section + "] " + key + " is empty");
    VecR out(static_cast<Eigen::Index>(vals.size()));
    for (std::size_t i = 0; i < vals.size(); ++i) out[static_cast<Eigen::Index>(i)] = vals[i];
    return out;
  }

  bool flag(const std::string& section, const std::string& key) {
    const std::string& v = raw(section, key);
    if (v == "on" || v == "true" || v == "1") return true;
    if (v == "off" || v == "false" || v == "0") return false;
    throw ConfigError("config: key [" + section + "] " + key + " must be on/off");
  }

  void reject_unknown() const {
    for (const auto& [section, keys] : tree_) {
      auto uit = used_.find(section);
      for (const auto& [key, value] : keys) {
        if (uit == used_.end() || !uit->second.count(key)) {
          throw ConfigError("config: unknown key [" + section + "] " + key);
        }
      }
    }
  }

 private:
  Tree tree_;
  std::map<std::string, std::set<std::string>> used_;
};

}  // namespace detail

struct ParsedConfig {
  sim::Scenario scenario;
  int gamma1 = 0;
  double gamma2 = 0.0;
  sim::Policy policy = sim::Policy::zfsca;
};

inline sim::Policy parse_policy(const std::string& s) {
  if (s == "gbd") return sim::Policy::gbd;
  if (s == "zfsca") return sim::Policy::zfsca;
  if (s == "correlation") return sim::Policy::correlation;
  if (s == "conventional") return sim::Policy::conventional;
  throw ConfigError("config: unknown policy '" + s + "'");
}

inline ParsedConfig parse_config_stream(std::istream& in) {
  detail::Reader r(detail::parse_tree(in));
  ParsedConfig out;
  sim::Scenario& sc = out.scenario;

  const int antennas = static_cast<int>(r.integer("array", "antennas"));
  if (antennas < 2) throw ConfigError("config: key [array] antennas must be >= 2");
  const double aperture = r.positive("array", "aperture_m");
  const double carrier = r.positive("array", "carrier_hz");
  sc.geometry = channel::ArrayGeometry::from_aperture(antennas, aperture, kSpeedOfLight / carrier);

  const VecR angles = r.list("users", "angles_deg");
  const VecR dists = r.list("users", "distances_m");
  if (angles.size() != dists.size()) {
    throw ConfigError("config: [users] angles_deg and distances_m must have the same length");
  }
  for (Eigen::Index i = 0; i < angles.size(); ++i) {
    if (!(angles[i] > 0.0 && angles[i] < 180.0)) {
      throw ConfigError("config: key [users] angles_deg entries must be in (0, 180)");
    }
    if (!(dists[i] > 0.0)) throw ConfigError("config: key [users] distances_m entries must be > 0");
    sc.users.push_back({deg2rad(angles[i]), dists[i]});
  }

  sc.eve_start.angle = deg2rad(r.number("eavesdropper", "angle_deg"));
  sc.eve_start.distance = r.positive("eavesdropper", "distance_m");
  sc.eve_start.vx = r.number("eavesdropper", "speed_x_mps");
  sc.eve_start.vy = r.number("eavesdropper", "speed_y_mps");
  if (!(sc.eve_start.angle > 0.0 && sc.eve_start.angle < kPi)) {
    throw ConfigError("config: key [eavesdropper] angle_deg must be in (0, 180)");
  }
  const double s_ang = deg2rad(r.positive("eavesdropper", "init_sigma_angle_deg"));
  const double s_dist = r.positive("eavesdropper", "init_sigma_distance_m");
  const double s_vel = r.positive("eavesdropper", "init_sigma_velocity_mps");
  sc.belief0.state = sc.eve_start;
  VecR b0(4);
  b0 << s_ang * s_ang, s_dist * s_dist, s_vel * s_vel, s_vel * s_vel;
  sc.belief0.cov = b0.asDiagonal();

  sc.p_max = dbm_to_watt(r.number("thresholds", "pmax_dbm"));
  const double rate_info = r.positive("thresholds", "rate_info_bps_hz");
  const double rate_leak = r.positive("thresholds", "rate_leak_bps_hz");
  const int kk = static_cast<int>(sc.users.size());
  sc.rate_info = VecR::Constant(kk, rate_info);
  sc.rate_leak = VecR::Constant(kk, rate_leak);
  sc.noise_user = VecR::Constant(kk, dbm_to_watt(r.number("thresholds", "noise_user_dbm")));
  sc.noise_eve = dbm_to_watt(r.number("thresholds", "noise_eve_dbm"));
  sc.consts.noise_bs = dbm_to_watt(r.number("thresholds", "noise_bs_dbm"));

  sc.consts.slot_duration = r.positive("ekf", "slot_s");
  sc.consts.sigma_theta = deg2rad(r.positive("ekf", "process_sigma_angle_deg"));
  sc.consts.sigma_dist = r.positive("ekf", "process_sigma_distance_m");
  sc.consts.sigma_vx = sc.consts.sigma_vy = r.positive("ekf", "process_sigma_velocity_mps");
  sc.consts.a_tau = r.positive("ekf", "a_tau");
  sc.consts.a_nu = r.positive("ekf", "a_nu");
  sc.consts.a_theta = r.positive("ekf", "a_theta");
  sc.consts.symbols = r.positive("ekf", "sensing_symbols");
  sc.consts.rcs = r.positive("eavesdropper", "rcs_m2");

  sc.slots = static_cast<int>(r.integer("run", "slots"));
  if (sc.slots < 1) throw ConfigError("config: key [run] slots must be >= 1");
  const long seed = r.integer("run", "seed");
  if (seed < 0) throw ConfigError("config: key [run] seed must be >= 0");
  sc.seed = static_cast<std::uint64_t>(seed);
  out.gamma1 = static_cast<int>(r.integer("run", "gamma1"));
  if (out.gamma1 < 0 || out.gamma1 > kk) throw ConfigError("config: key [run] gamma1 must be in [0, K]");
  out.gamma2 = r.positive("run", "gamma2");
  out.policy = parse_policy(r.raw("run", "policy"));
  sc.safety_factor = r.positive("run", "safety_factor");
  sc.rcs_fluctuation = r.flag("run", "rcs_fluctuation");

  r.reject_unknown();
  sc.validate();
  return out;
}

inline ParsedConfig parse_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("config: cannot open '" + path + "'");
  return parse_config_stream(in);
}

/// Canonical emission; numbers use enough digits to round-trip exactly.
inline std::string write_config(const ParsedConfig& pc) {
  const sim::Scenario& sc = pc.scenario;
  std::ostringstream os;
  os.precision(17);
  auto num = [&](double v) {
    std::ostringstream t;
    t.precision(17);
    t << v;
    return t.str();
  };
  os << "[array]\n";
  os << "antennas = " << sc.geometry.num_antennas << "\n";
  os << "aperture_m = " << num(sc.geometry.aperture()) << "\n";
  os << "carrier_hz = " << num(kSpeedOfLight / sc.geometry.wavelength) << "\n\n";
  os << "[users]\n";
  os << "angles_deg = ";
  for (std::size_t i = 0; i < sc.users.size(); ++i) os << (i ? ", " : "") << num(rad2deg(sc.users[i].angle));
  os << "\ndistances_m = ";
  for (std::size_t i = 0; i < sc.users.size(); ++i) os << (i ? ", " : "") << num(sc.users[i].distance);
  os << "\n\n[eavesdropper]\n";
  os << "angle_deg = " << num(rad2deg(sc.eve_start.angle)) << "\n";
  os << "distance_m = " << num(sc.eve_start.distance) << "\n";
  os << "speed_x_mps = " << num(sc.eve_start.vx) << "\n";
  os << "speed_y_mps = " << num(sc.eve_start.vy) << "\n";
  os << "rcs_m2 = " << num(sc.consts.rcs) << "\n";
  os << "init_sigma_angle_deg = " << num(rad2deg(std::sqrt(sc.belief0.cov(0, 0)))) << "\n";
  os << "init_sigma_distance_m = " << num(std::sqrt(sc.belief0.cov(1, 1))) << "\n";
  os << "init_sigma_velocity_mps = " << num(std::sqrt(sc.belief0.cov(2, 2))) << "\n\n";
  os << "[thresholds]\n";
  os << "pmax_dbm = " << num(watt_to_dbm(sc.p_max)) << "\n";
  os << "rate_info_bps_hz = " << num(sc.rate_info[0]) << "\n";
  os << "rate_leak_bps_hz = " << num(sc.rate_leak[0]) << "\n";
  os << "noise_user_dbm = " << num(watt_to_dbm(sc.noise_user[0])) << "\n";
  os << "noise_eve_dbm = " << num(watt_to_dbm(sc.noise_eve)) << "\n";
  os << "noise_bs_dbm = " << num(watt_to_dbm(sc.consts.noise_bs)) << "\n\n";
  os << "[ekf]\n";
  os << "slot_s = " << num(sc.consts.slot_duration) << "\n";
  os << "process_sigma_angle_deg = " << num(rad2deg(sc.consts.sigma_theta)) << "\n";
  os << "process_sigma_distance_m = " << num(sc.consts.sigma_dist) << "\n";
  os << "process_sigma_velocity_mps = " << num(sc.consts.sigma_vx) << "\n";
  os << "a_tau = " << num(sc.consts.a_tau) << "\n";
  os << "a_nu = " << num(sc.consts.a_nu) << "\n";
  os << "a_theta = " << num(sc.consts.a_theta) << "\n";
  os << "sensing_symbols = " << num(sc.consts.symbols) << "\n\n";
  os << "[run]\n";
  os << "slots = " << sc.slots << "\n";
  os << "seed = " << sc.seed << "\n";
  os << "gamma1 = " << pc.gamma1 << "\n";
  os << "gamma2 = " << num(pc.gamma2) << "\n";
  os << "policy = " << sim::to_string(pc.policy) << "\n";
  os << "safety_factor = " << num(sc.safety_factor) << "\n";
  os << "rcs_fluctuation = " << (sc.rcs_fluctuation ? "on" : "off") << "\n";
  return os.str();
}

}  // namespace nfsec::config
