// Command-line front end: scenario configuration in, CSV artifacts out.
//
// Exit codes: 0 ok, 2 design infeasible, 3 solver failure, 4 config error.

#include <CLI11.hpp>

#include <cstdio>
#include <filesystem>
#include <sstream>

#include "nfsec/config.hpp"
#include "nfsec/io.hpp"
#include "nfsec/sim.hpp"

namespace {

using namespace nfsec;

constexpr int kExitOk = 0;
constexpr int kExitInfeasible = 2;
constexpr int kExitSolverFailure = 3;
constexpr int kExitConfigError = 4;

struct Cli {
  std::string config_path;
  std::string mode;
  std::string gamma1_arg, gamma2_arg;
  std::uint64_t seed = 0;
  bool seed_set = false;
  std::string out_dir = ".";
  double tol = 0.0;
  std::string profile;
};

std::vector<int> parse_gamma1(const std::string& arg, int fallback, int k_users) {
  if (arg.empty()) return {fallback};
  std::vector<int> out;
  const auto dots = arg.find("..");
  if (dots != std::string::npos) {
    const int lo = std::stoi(arg.substr(0, dots));
    const int hi = std::stoi(arg.substr(dots + 2));
    for (int v = lo; v <= hi; ++v) out.push_back(v);
  } else {
    std::stringstream ss(arg);
    std::string item;
    while (std::getline(ss, item, ',')) out.push_back(std::stoi(item));
  }
  if (out.empty()) throw config::ConfigError("empty --gamma1 range");
  for (int v : out) {
    if (v < 0 || v > k_users) throw config::ConfigError("--gamma1 value outside [0, K]");
  }
  return out;
}

VecR parse_gamma2(const std::string& arg, double fallback) {
  std::vector<double> vals;
  if (arg.empty()) {
    vals.push_back(fallback);
  } else if (arg.find(':') != std::string::npos) {
    // start:step:end inclusive
    double start, step, end;
    char c1, c2;
    std::istringstream ss(arg);
    if (!(ss >> start >> c1 >> step >> c2 >> end) || c1 != ':' || c2 != ':' || step <= 0.0) {
      throw config::ConfigError("malformed --gamma2 range, expected start:step:end");
    }
    for (double v = start; v <= end + 1e-12 * std::abs(end); v += step) vals.push_back(v);
  } else {
    std::stringstream ss(arg);
    std::string item;
    while (std::getline(ss, item, ',')) vals.push_back(std::stod(item));
  }
  if (vals.empty()) throw config::ConfigError("empty --gamma2 range");
  for (double v : vals) {
    if (!(v > 0.0)) throw config::ConfigError("--gamma2 values must be > 0");
  }
  VecR out(static_cast<Eigen::Index>(vals.size()));
  for (std::size_t i = 0; i < vals.size(); ++i) out[static_cast<Eigen::Index>(i)] = vals[i];
  return out;
}

std::string out_path(const Cli& cli, const std::string& name) {
  return (std::filesystem::path(cli.out_dir) / name).string();
}

sim::EpisodeOptions solver_options(const Cli& cli) {
  sim::EpisodeOptions opts;
  if (cli.tol > 0.0) {
    opts.gbd.solver.tol = cli.tol;
    opts.sca.solver.tol = cli.tol;
  }
  return opts;
}

int run_gbd(const Cli& cli, const config::ParsedConfig& pc, int gamma1, double gamma2) {
  const auto& sc = pc.scenario;
  const auto pred = tracking::predict(sc.belief0, sc.consts.slot_duration, sc.consts.process_cov());
  const auto inst = sim::make_instance(sc, pred.state, pred.cov, gamma1, gamma2);
  const auto opts = solver_options(cli);
  const auto res = gbd::gbd_solve(inst, opts.gbd_eps, opts.gbd);

  std::ostringstream os;
  io::write_gbd_trace_csv(os, res.trace);
  char name[128];
  std::snprintf(name, sizeof(name), "gbd_trace_seed%" PRIu64 "_%s.csv", sc.seed,
                io::gamma_tag(gamma1, gamma2).c_str());
  io::write_file(out_path(cli, name), os.str());

  if (res.design.status == gbd::DesignStatus::infeasible) {
    std::printf("status=infeasible gamma1=%d gamma2=%s\n", gamma1, io::fmt12(gamma2).c_str());
    return kExitInfeasible;
  }
  if (res.design.status != gbd::DesignStatus::converged) {
    std::printf("status=solver_failure detail=%s\n", gbd::to_string(res.design.status));
    return kExitSolverFailure;
  }
  std::printf("status=ok mode=gbd power_w=%s schedule=%d ubd=%s lbd=%s iters=%d file=%s\n",
              io::fmt12(res.design.objective).c_str(), io::schedule_mask(res.design.schedule),
              io::fmt12(res.design.ubd).c_str(), io::fmt12(res.design.lbd).c_str(), res.design.iterations, name);
  return kExitOk;
}

int run_zfsca(const Cli& cli, const config::ParsedConfig& pc, int gamma1, double gamma2) {
  const auto& sc = pc.scenario;
  const auto pred = tracking::predict(sc.belief0, sc.consts.slot_duration, sc.consts.process_cov());
  const auto inst = sim::make_instance(sc, pred.state, pred.cov, gamma1, gamma2);
  const auto opts = solver_options(cli);
  const auto res = zfsca::zfsca_solve(inst, opts.sca);

  std::ostringstream os;
  io::write_sca_trace_csv(os, res.state);
  char name[128];
  std::snprintf(name, sizeof(name), "sca_trace_seed%" PRIu64 "_%s.csv", sc.seed,
                io::gamma_tag(gamma1, gamma2).c_str());
  io::write_file(out_path(cli, name), os.str());

  if (res.design.status == gbd::DesignStatus::infeasible) {
    std::printf("status=infeasible gamma1=%d gamma2=%s\n", gamma1, io::fmt12(gamma2).c_str());
    return kExitInfeasible;
  }
  if (res.design.status != gbd::DesignStatus::converged) {
    std::printf("status=solver_failure detail=%s\n", gbd::to_string(res.design.status));
    return kExitSolverFailure;
  }
  std::printf("status=ok mode=zfsca power_w=%s schedule=%d iters=%d file=%s\n",
              io::fmt12(res.design.objective).c_str(), io::schedule_mask(res.design.schedule),
              res.state.iterations, name);
  return kExitOk;
}

int run_episode_mode(const Cli& cli, const config::ParsedConfig& pc, int gamma1, double gamma2) {
  const auto records = sim::run_episode(pc.scenario, pc.policy, gamma1, gamma2, solver_options(cli));
  std::ostringstream os;
  io::write_episode_csv(os, records);
  char name[160];
  std::snprintf(name, sizeof(name), "episode_%s_seed%" PRIu64 "_%s.csv", sim::to_string(pc.policy),
                pc.scenario.seed, io::gamma_tag(gamma1, gamma2).c_str());
  io::write_file(out_path(cli, name), os.str());
  const auto m = sim::metrics(records, pc.scenario, 500);
  std::printf(
      "status=ok mode=episode policy=%s slots=%d infeasible_slots=%d avg_power_w=%s avg_served=%s "
      "rmse_angle_deg=%s rmse_dist_m=%s leak_violation_rate=%s file=%s\n",
      sim::to_string(pc.policy), m.slots, m.infeasible_slots, io::fmt12(m.avg_power).c_str(),
      io::fmt12(m.avg_served).c_str(), io::fmt12(rad2deg(m.rmse_angle)).c_str(), io::fmt12(m.rmse_dist).c_str(),
      io::fmt12(m.leak_violation_rate).c_str(), name);
  return m.infeasible_slots == m.slots ? kExitInfeasible : kExitOk;
}

int run_pareto(const Cli& cli, const config::ParsedConfig& pc, const std::vector<int>& g1, const VecR& g2) {
  const auto points = sim::pareto_sweep(pc.scenario, g1, g2, solver_options(cli));
  std::ostringstream os;
  io::write_pareto_csv(os, points);
  char name[160];
  std::snprintf(name, sizeof(name), "pareto_seed%" PRIu64 "_g1-%d-%d_g2-%g-%g.csv", pc.scenario.seed,
                g1.front(), g1.back(), g2.minCoeff(), g2.maxCoeff());
  io::write_file(out_path(cli, name), os.str());
  int feasible = 0;
  for (const auto& p : points) feasible += p.feasible ? 1 : 0;
  std::printf("status=ok mode=pareto points=%zu feasible=%d file=%s\n", points.size(), feasible, name);
  return feasible > 0 ? kExitOk : kExitInfeasible;
}

int run_beampattern(const Cli& cli, const config::ParsedConfig& pc, int gamma1, double gamma2) {
  const auto& sc = pc.scenario;
  const auto pred = tracking::predict(sc.belief0, sc.consts.slot_duration, sc.consts.process_cov());
  const auto inst = sim::make_instance(sc, pred.state, pred.cov, gamma1, gamma2);
  const auto opts = solver_options(cli);

  gbd::Design design;
  if (pc.policy == sim::Policy::gbd) {
    design = gbd::gbd_solve(inst, opts.gbd_eps, opts.gbd).design;
  } else {
    design = zfsca::zfsca_solve(inst, opts.sca).design;
  }
  if (design.status == gbd::DesignStatus::infeasible) {
    std::printf("status=infeasible gamma1=%d gamma2=%s\n", gamma1, io::fmt12(gamma2).c_str());
    return kExitInfeasible;
  }
  if (design.status != gbd::DesignStatus::converged) {
    std::printf("status=solver_failure detail=%s\n", gbd::to_string(design.status));
    return kExitSolverFailure;
  }

  double dmax = sc.eve_start.distance;
  for (const auto& u : sc.users) dmax = std::max(dmax, u.distance);
  const int na = 121, nd = 81;
  VecR angles_deg(na), dists(nd);
  for (int i = 0; i < na; ++i) angles_deg[i] = 30.0 + 120.0 * i / (na - 1);
  for (int i = 0; i < nd; ++i) dists[i] = 1.0 + (1.5 * dmax - 1.0) * i / (nd - 1);
  VecR angles = angles_deg.unaryExpr([](double d) { return deg2rad(d); });

  int first_served = -1;
  for (std::size_t k = 0; k < design.schedule.size(); ++k) {
    if (design.schedule[k]) {
      first_served = static_cast<int>(k);
      break;
    }
  }
  char name_info[160] = "", name_sens[160];
  if (first_served >= 0) {
    const MatR info = channel::beampattern(design.w[first_served], sc.geometry, angles, dists);
    std::ostringstream os;
    io::write_beampattern_csv(os, angles_deg, dists, info);
    std::snprintf(name_info, sizeof(name_info), "beampattern_info_seed%" PRIu64 "_%s.csv", sc.seed,
                  io::gamma_tag(gamma1, gamma2).c_str());
    io::write_file(out_path(cli, name_info), os.str());
  }
  const MatR sens = channel::beampattern(design.Z, sc.geometry, angles, dists);
  std::ostringstream os;
  io::write_beampattern_csv(os, angles_deg, dists, sens);
  std::snprintf(name_sens, sizeof(name_sens), "beampattern_sensing_seed%" PRIu64 "_%s.csv", sc.seed,
                io::gamma_tag(gamma1, gamma2).c_str());
  io::write_file(out_path(cli, name_sens), os.str());
  std::printf("status=ok mode=beampattern schedule=%d info_file=%s sensing_file=%s\n",
              io::schedule_mask(design.schedule), name_info, name_sens);
  return kExitOk;
}

int run_selftest() {
  int failures = 0;
  auto check = [&](bool ok, const char* what) {
    std::printf("[%s] %s\n", ok ? "PASS" : "FAIL", what);
    if (!ok) ++failures;
  };

  const auto g = channel::ArrayGeometry::from_aperture(16, 1.0, kSpeedOfLight / 28e9);
  Rng rng(1);
  bool norm_ok = true;
  for (int t = 0; t < 20; ++t) {
    const VecC a = channel::array_response(g, {rng.uniform(0.1, kPi - 0.1), rng.uniform(0.5, 200.0)});
    norm_ok = norm_ok && std::abs(a.squaredNorm() - 16.0) < 1e-12;
  }
  check(norm_ok, "array response norm identity");

  const double rd = channel::rayleigh_distance(1.0, kSpeedOfLight / 28e9);
  check(rd > 186.0 && rd < 188.0, "rayleigh distance at the reference aperture");

  bool ekf_ok = true;
  for (int t = 0; t < 5; ++t) {
    tracking::EveState s{rng.uniform(0.4, 2.7), rng.uniform(3.0, 20.0), rng.uniform(-4.0, 4.0),
                         rng.uniform(-4.0, 4.0)};
    const MatR fan = tracking::jacobian_motion(s, 0.2);
    MatR fd(4, 4);
    for (int i = 0; i < 4; ++i) {
      VecR sp = s.to_vector(), sm = s.to_vector();
      const double h = 1e-6 * std::max(1.0, std::abs(sp[i]));
      sp[i] += h;
      sm[i] -= h;
      fd.col(i) = (tracking::state_transition(tracking::EveState::from_vector(sp), 0.2).to_vector() -
                   tracking::state_transition(tracking::EveState::from_vector(sm), 0.2).to_vector()) /
                  (2.0 * h);
    }
    ekf_ok = ekf_ok && (fd - fan).norm() / fan.norm() < 1e-5;
  }
  check(ekf_ok, "motion jacobian vs finite differences");

  const uncertainty::UncertaintyBox box{1.2, 10.0, 3e-4, 0.1};
  double grid_best = 0.0;
  const auto coeffs = uncertainty::vartheta_coeffs(g, box.theta_center, box.dist_center);
  for (int i = 0; i < 41; ++i) {
    for (int j = 0; j < 41; ++j) {
      const double dt = box.theta_halfwidth() * (2.0 * i / 40.0 - 1.0);
      const double dd = box.dist_halfwidth() * (2.0 * j / 40.0 - 1.0);
      double acc = 0.0;
      for (const auto& [a, b] : coeffs) acc += std::pow(a * dt + b * dd, 2);
      grid_best = std::max(grid_best, acc);
    }
  }
  check(std::abs(uncertainty::beta_a(g, box) - grid_best) < 1e-9, "robust radius vertex rule");

  conic::ConicProgram p;
  const int x = p.add_scalar("x");
  p.set_objective(p.scalar(x));
  p.add_ge(p.scalar(x), 3.0);
  const auto sol = conic::solve(p);
  check(sol.status == conic::SolveStatus::optimal && std::abs(sol.objective - 3.0) < 1e-6 &&
            std::abs(sol.ge_dual[0] - 1.0) < 1e-6,
        "interior-point sanity on a scalar program");

  std::printf("status=%s failures=%d\n", failures == 0 ? "ok" : "solver_failure", failures);
  return failures == 0 ? kExitOk : kExitSolverFailure;
}

}  // namespace

int main(int argc, char** argv) {
  Cli cli;
  CLI::App app{"Near-field secure communication designer and simulator"};
  app.add_option("--config", cli.config_path, "scenario configuration file");
  app.add_option("--mode", cli.mode, "gbd|zfsca|episode|pareto|beampattern|selftest")->required();
  app.add_option("--gamma1", cli.gamma1_arg, "service floor (int or lo..hi)");
  app.add_option("--gamma2", cli.gamma2_arg, "tracking budget (value, list, or start:step:end)");
  auto* seed_opt = app.add_option("--seed", cli.seed, "root seed override");
  app.add_option("--out", cli.out_dir, "output directory")->default_val(".");
  app.add_option("--tol", cli.tol, "solver tolerance override");
  app.add_option("--profile", cli.profile, "desk|paper");

  CLI11_PARSE(app, argc, argv);
  cli.seed_set = seed_opt->count() > 0;

  try {
    if (cli.mode == "selftest") return run_selftest();

    if (cli.config_path.empty()) throw nfsec::config::ConfigError("--config is required for this mode");
    auto pc = nfsec::config::parse_config(cli.config_path);
    if (cli.seed_set) pc.scenario.seed = cli.seed;
    if (!cli.profile.empty()) {
      if (cli.profile == "desk") {
        // desk profile: cap the array size for tractable global solves
        auto& g = pc.scenario.geometry;
        if (g.num_antennas > 16) {
          g = nfsec::channel::ArrayGeometry::from_aperture(16, g.aperture(), g.wavelength);
        }
      } else if (cli.profile != "paper") {
        throw nfsec::config::ConfigError("--profile must be desk or paper");
      }
    }
    const int kk = static_cast<int>(pc.scenario.users.size());
    const auto g1 = parse_gamma1(cli.gamma1_arg, pc.gamma1, kk);
    const auto g2 = parse_gamma2(cli.gamma2_arg, pc.gamma2);

    if (cli.mode == "gbd") return run_gbd(cli, pc, g1.front(), g2[0]);
    if (cli.mode == "zfsca") return run_zfsca(cli, pc, g1.front(), g2[0]);
    if (cli.mode == "episode") return run_episode_mode(cli, pc, g1.front(), g2[0]);
    if (cli.mode == "pareto") return run_pareto(cli, pc, g1, g2);
    if (cli.mode == "beampattern") return run_beampattern(cli, pc, g1.front(), g2[0]);
    throw nfsec::config::ConfigError("unknown --mode '" + cli.mode + "'");
  } catch (const nfsec::config::ConfigError& e) {
    std::printf("status=config_error detail=%s\n", e.what());
    return kExitConfigError;
  } catch (const std::invalid_argument& e) {
    std::printf("status=config_error detail=%s\n", e.what());
    return kExitConfigError;
  } catch (const std::exception& e) {
    std::printf("status=solver_failure detail=%s\n", e.what());
    return kExitSolverFailure;
  }
}
