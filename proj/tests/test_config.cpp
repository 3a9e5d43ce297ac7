#include <catch2/catch.hpp>

#include <sstream>

#include "nfsec/config.hpp"
#include "nfsec/io.hpp"

using namespace nfsec;
using namespace nfsec::config;

namespace {
std::string repo_config() { return std::string(NFSEC_SOURCE_DIR) + "/configs/paper_vi.cfg"; }
}  // namespace

TEST_CASE("reference configuration carries the reference constants") {
  const auto pc = parse_config(repo_config());
  const auto& sc = pc.scenario;
  CHECK(sc.geometry.num_antennas == 64);
  CHECK(sc.geometry.aperture() == Approx(1.0));
  CHECK(sc.geometry.wavelength == Approx(kSpeedOfLight / 28e9));
  CHECK(sc.users.size() == 7);
  CHECK(sc.p_max == Approx(dbm_to_watt(37.0)));
  CHECK(sc.p_max == Approx(5.0119).epsilon(1e-4));
  CHECK(sc.rate_info[0] == 6.0);
  CHECK(sc.rate_leak[0] == 0.05);
  CHECK(sc.noise_user[0] == Approx(1e-10));
  CHECK(sc.noise_eve == Approx(1e-11));
  CHECK(sc.consts.noise_bs == Approx(1e-11));
  CHECK(sc.consts.slot_duration == 0.2);
  CHECK(sc.consts.sigma_theta == Approx(deg2rad(0.02)));
  CHECK(sc.consts.sigma_dist == 0.2);
  CHECK(sc.consts.sigma_vx == 0.15);
  CHECK(sc.consts.a_tau == 1e-6);
  CHECK(sc.consts.a_nu == 600.0);
  CHECK(sc.consts.a_theta == 0.1);
  CHECK(sc.consts.symbols == 1e4);
  CHECK(pc.gamma1 == 5);
  CHECK(pc.gamma2 == 0.1);
  // the scenario keeps every terminal inside the near-field region
  CHECK(sc.users_in_near_field());
}

TEST_CASE("empty or broken configurations name the offender") {
  std::istringstream empty("");
  try {
    parse_config_stream(empty);
    FAIL("expected a config error");
  } catch (const ConfigError& e) {
    CHECK(std::string(e.what()).find("[array]") != std::string::npos);
  }

  const auto base = parse_config(repo_config());
  // unknown key
  std::string text = write_config(base);
  std::istringstream unknown(text + "\n[run]\nwhatever = 1\n");
  try {
    parse_config_stream(unknown);
    FAIL("expected a config error");
  } catch (const ConfigError& e) {
    const std::string msg = e.what();
    CHECK(msg.find("duplicate") == std::string::npos);
    CHECK(msg.find("whatever") != std::string::npos);
  }

  // missing key: drop a line
  const std::string needle = "a_nu = ";
  const auto at = text.find(needle);
  REQUIRE(at != std::string::npos);
  const auto line_end = text.find('\n', at);
  std::istringstream missing(text.substr(0, at) + text.substr(line_end + 1));
  try {
    parse_config_stream(missing);
    FAIL("expected a config error");
  } catch (const ConfigError& e) {
    CHECK(std::string(e.what()).find("a_nu") != std::string::npos);
  }

  // non-physical value
  auto bad = text;
  const auto slot = bad.find("slot_s = ");
  bad.replace(slot, bad.find('\n', slot) - slot, "slot_s = -1");
  std::istringstream nonphys(bad);
  try {
    parse_config_stream(nonphys);
    FAIL("expected a config error");
  } catch (const ConfigError& e) {
    CHECK(std::string(e.what()).find("slot_s") != std::string::npos);
  }
}

TEST_CASE("write-then-parse round trip is the identity") {
  const auto a = parse_config(repo_config());
  const std::string text = write_config(a);
  std::istringstream in(text);
  const auto b = parse_config_stream(in);
  CHECK(write_config(b) == text);
  CHECK(b.scenario.p_max == a.scenario.p_max);
  CHECK(b.scenario.consts.a_tau == a.scenario.consts.a_tau);
  CHECK(b.scenario.users.size() == a.scenario.users.size());
  for (std::size_t i = 0; i < a.scenario.users.size(); ++i) {
    CHECK(b.scenario.users[i].angle == a.scenario.users[i].angle);
    CHECK(b.scenario.users[i].distance == a.scenario.users[i].distance);
  }
  CHECK(b.gamma2 == a.gamma2);
}

TEST_CASE("twelve-digit formatting survives a parse round trip") {
  Rng rng(3);
  for (int t = 0; t < 200; ++t) {
    const double v = (rng.uniform() - 0.5) * std::pow(10.0, rng.uniform(-12.0, 12.0));
    const double back = std::stod(io::fmt12(v));
    CHECK(back == Approx(v).epsilon(1e-11));
  }
  CHECK(io::fmt12(0.0) == "0");
  CHECK(io::fmt12(1.0) == "1");
}

TEST_CASE("csv writers emit fixed headers and stable bytes") {
  sim::SlotRecord r;
  r.slot = 0;
  r.feasible = true;
  r.schedule = {1, 0};
  r.power = 1.25;
  r.rates = VecR::Zero(2);
  r.leaks = VecR::Zero(2);
  r.rates[0] = 3.5;
  std::ostringstream a, b;
  io::write_episode_csv(a, {r});
  io::write_episode_csv(b, {r});
  CHECK(a.str() == b.str());
  CHECK(a.str().rfind("slot,feasible,schedule,power_w", 0) == 0);
  CHECK(a.str().find(",3.5,") != std::string::npos);

  std::vector<sim::ParetoPoint> pts = {{2, 0.5, 3.0, true}, {1, 0.25, 2.0, true}, {1, 0.75, 1.5, true}};
  std::ostringstream po;
  io::write_pareto_csv(po, pts);
  const std::string s = po.str();
  // sorted by (gamma1, gamma2)
  CHECK(s.find("1,0.25") < s.find("1,0.75"));
  CHECK(s.find("1,0.75") < s.find("2,0.5"));

  VecR ang(2), dd(2);
  ang << 50.0, 60.0;
  dd << 2.0, 4.0;
  MatR grid(2, 2);
  grid << 1.0, 0.5, 0.25, 0.125;
  std::ostringstream bo;
  io::write_beampattern_csv(bo, ang, dd, grid);
  CHECK(bo.str().find("dist_m\\angle_deg,50,60") == 0);
  CHECK(bo.str().find("\n2,1,0.5\n") != std::string::npos);
}
