#pragma once

// CSV writers with a fixed column order and 12-significant-digit decimal
// formatting; identical inputs produce byte-identical files.

#include <cinttypes>
#include <cstdio>
#include <fstream>
#include <string>
#include <vector>

#include "nfsec/gbd.hpp"
#include "nfsec/sim.hpp"
#include "nfsec/zfsca.hpp"

namespace nfsec::io {

inline std::string fmt12(double v) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.12g", v);
  return buf;
}

inline std::string gamma_tag(int gamma1, double gamma2) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "g1-%d_g2-%g", gamma1, gamma2);
  return buf;
}

inline int schedule_mask(const std::vector<int>& e) {
  int mask = 0;
  for (std::size_t k = 0; k < e.size(); ++k) mask |= (e[k] ? 1 : 0) << k;
  return mask;
}

inline void write_episode_csv(std::ostream& os, const std::vector<sim::SlotRecord>& records) {
  const int kk = records.empty() ? 0 : static_cast<int>(records.front().schedule.size());
  os << "slot,feasible,schedule,power_w,angle_true_deg,dist_true_m,angle_est_deg,dist_est_m,"
        "angle_presumed_deg,dist_presumed_m,trace_pred,trace_post,realized_snr";
  for (int k = 0; k < kk; ++k) os << ",rate_" << k;
  for (int k = 0; k < kk; ++k) os << ",leak_" << k;
  os << "\n";
  for (const auto& r : records) {
    os << r.slot << ',' << (r.feasible ? 1 : 0) << ',' << schedule_mask(r.schedule) << ',' << fmt12(r.power)
       << ',' << fmt12(rad2deg(r.truth.angle)) << ',' << fmt12(r.truth.distance) << ','
       << fmt12(rad2deg(r.estimate.angle)) << ',' << fmt12(r.estimate.distance) << ','
       << fmt12(rad2deg(r.presumed.angle)) << ',' << fmt12(r.presumed.distance) << ',' << fmt12(r.trace_pred)
       << ',' << fmt12(r.trace_post) << ',' << fmt12(r.realized_snr);
    for (int k = 0; k < kk; ++k) os << ',' << fmt12(r.rates[k]);
    for (int k = 0; k < kk; ++k) os << ',' << fmt12(r.leaks[k]);
    os << "\n";
  }
}

inline void write_pareto_csv(std::ostream& os, std::vector<sim::ParetoPoint> points) {
  std::stable_sort(points.begin(), points.end(), [](const sim::ParetoPoint& a, const sim::ParetoPoint& b) {
    if (a.gamma1 != b.gamma1) return a.gamma1 < b.gamma1;
    return a.gamma2 < b.gamma2;
  });
  os << "gamma1,gamma2,power_w,feasible\n";
  for (const auto& p : points) {
    os << p.gamma1 << ',' << fmt12(p.gamma2) << ',' << (p.feasible ? fmt12(p.power) : "inf") << ','
       << (p.feasible ? 1 : 0) << "\n";
  }
}

inline void write_gbd_trace_csv(std::ostream& os, const gbd::GbdTrace& trace) {
  os << "iteration,ubd,lbd,cut_kind,schedule\n";
  for (std::size_t i = 0; i < trace.size(); ++i) {
    os << (i + 1) << ',' << fmt12(trace[i].ubd) << ',' << fmt12(trace[i].lbd) << ','
       << (trace[i].cut_kind == gbd::Cut::Kind::optimality ? "optimality" : "feasibility") << ','
       << schedule_mask(trace[i].schedule) << "\n";
  }
}

inline void write_sca_trace_csv(std::ostream& os, const zfsca::ScaState& state) {
  os << "iteration,penalty,objective,power_w,binariness\n";
  for (std::size_t i = 0; i < state.history.size(); ++i) {
    const auto& it = state.history[i];
    os << (i + 1) << ',' << fmt12(it.rho) << ',' << fmt12(it.objective) << ',' << fmt12(it.power) << ','
       << fmt12(it.binariness) << "\n";
  }
}

/// Grid matrix with a header row of angles (degrees) and a leading column of
/// distances (meters).
inline void write_beampattern_csv(std::ostream& os, const VecR& angles_deg, const VecR& dists_m,
                                  const MatR& grid) {
  os << "dist_m\\angle_deg";
  for (Eigen::Index j = 0; j < angles_deg.size(); ++j) os << ',' << fmt12(angles_deg[j]);
  os << "\n";
  for (Eigen::Index i = 0; i < dists_m.size(); ++i) {
    os << fmt12(dists_m[i]);
    for (Eigen::Index j = 0; j < angles_deg.size(); ++j) os << ',' << fmt12(grid(i, j));
    os << "\n";
  }
}

inline void write_file(const std::string& path, const std::string& content) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot open output file '" + path + "'");
  out << content;
}

}  // namespace nfsec::io
