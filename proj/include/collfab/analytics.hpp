/******************************************************************************
This source code is licensed under the MIT license found in the
LICENSE file in the root directory of this source tree.
*******************************************************************************/

#ifndef COLLFAB_ANALYTICS_HPP
#define COLLFAB_ANALYTICS_HPP

#include <optional>
#include <string>
#include <vector>

#include "collfab/workload.hpp"

namespace collfab {

// Per-node network bytes sent per payload byte for the 4-phase hierarchical
// all-reduce on an LxVxH torus.
double hierarchical_traffic_ratio(int l_dim, int v_dim, int h_dim);

// Closed-form memory read bandwidth needed to drive `target_network_gbps`.
// Baseline reads 1.5 bytes per byte on the wire in steady state; the offload
// engine reads each payload byte once however much the algorithm amplifies it.
double required_mem_bw_analytic(CollectiveKind kind, int l_dim, int v_dim, int h_dim,
                                double target_network_gbps, DatapathKind datapath);

struct BwSweepPoint {
  double comm_mem_bw_gbps = 0.0;
  double achieved_network_gbps = 0.0;
  double fraction_of_ideal = 0.0;
};

struct BwSweepResult {
  double ideal_plateau_gbps = 0.0;
  std::vector<BwSweepPoint> baseline;
  std::vector<BwSweepPoint> ace;
};

std::vector<double> default_bw_grid();

// Single collective microbenchmark per grid point, baseline and ACE, plus one
// ideal run for the plateau. `jobs` parallelizes across points.
BwSweepResult bw_sweep(const ResourceBudget& base, const AceConfig& ace, const Topology& topo,
                       CollectiveKind kind, Bytes payload_bytes, Bytes chunk_bytes,
                       Bytes message_bytes, const std::vector<double>& grid, int jobs = 1);

struct SmSweepPoint {
  int sm_comm = 0;
  double achieved_network_gbps = 0.0;
};

// Baseline network drive vs number of SMs ceded to communication, with the
// full memory bandwidth available to the communication task.
std::vector<SmSweepPoint> sm_sweep(const ResourceBudget& base, const Topology& topo,
                                   CollectiveKind kind, Bytes payload_bytes, Bytes chunk_bytes,
                                   Bytes message_bytes, const std::vector<int>& sm_grid,
                                   int jobs = 1);

// ---- reports ---------------------------------------------------------------

struct ReportContext {
  std::string config_hash;
  std::uint64_t seed = 0;
  std::string system_config;
  int dims_l = 0, dims_v = 0, dims_h = 0;
  std::string workload;
};

std::string metrics_to_json(const RunMetrics& m, const ReportContext& ctx);
void write_report(const std::string& path, const RunMetrics& m, const ReportContext& ctx);
void write_timeline_csv(const std::string& path, const RunMetrics& m);

// ---- oracle equivalence ------------------------------------------------------

struct OracleCheckResult {
  bool ok = true;
  std::uint64_t cases = 0;
  std::string counterexample;  // empty when ok
};

// Exhaustive schedule-vs-definition equivalence over all torus shapes with at
// most `max_nodes` nodes, all four collective kinds, `vectors` random integer
// initializations each.
OracleCheckResult run_oracle_check(int max_nodes, int vectors);

}  // namespace collfab

#endif
