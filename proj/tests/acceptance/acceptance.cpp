/******************************************************************************
This source code is licensed under the MIT license found in the
LICENSE file in the root directory of this source tree.
*******************************************************************************/

// End-to-end acceptance suite. Each criterion prints one [PASS]/[FAIL] line;
// the process exits nonzero if any executed criterion fails.

#include <atomic>
#include <chrono>
#include <cstring>
#include <functional>
#include <iostream>
#include <map>
#include <numeric>
#include <sstream>
#include <thread>
#include <vector>

#include "collfab/analytics.hpp"
#include "collfab/config.hpp"

using namespace collfab;

namespace {

struct Outcome {
  bool pass = false;
  std::string detail;
};

ResourceBudget preset_base() {
  ResourceBudget b;
  b.mem_bw_comm_gbps = -1.0;
  b.sm_comm = -1;
  return b;
}

SystemConfig preset(SystemKind kind) {
  return make_system_config(kind, preset_base(), AceConfig{}, 64 << 10, 8 << 10);
}

// ---- C1: collective oracle equivalence --------------------------------------
Outcome c1() {
  const auto r = run_oracle_check(16, 50);
  Outcome o;
  o.pass = r.ok;
  std::ostringstream d;
  d << r.cases << " cases";
  if (!r.ok) d << "; " << r.counterexample;
  o.detail = d.str();
  return o;
}

// ---- C2: ACE traffic anchor (exact) ------------------------------------------
Outcome c2() {
  Outcome o;
  const Topology t = build_torus(4, 4, 4, {});
  const Bytes chunk = 64 << 10;
  const auto sched = plan_hierarchical_all_reduce(t, chunk, 8 << 10);
  const auto analytic = ace_traffic(sched);
  const bool anchor = analytic.network_bytes_sent == 64 * chunk * 9 / 4 &&
                      analytic.mem_bytes_read == 64 * chunk;

  // the engine must agree byte for byte on a multi-chunk payload
  const Bytes payload = 1 << 20;
  EndpointSetup setup = preset(SystemKind::Ace).setup;
  Simulator sim(t, setup);
  sim.issue_collective(CollectiveKind::AllReduce, payload, "anchor");
  sim.run();
  const bool engine = sim.stats().traffic.mem_bytes_read == payload * 64 &&
                      sim.stats().traffic.network_bytes_sent == payload * 64 * 9 / 4 &&
                      sim.stats().traffic.mem_bytes_written == payload * 64;
  o.pass = anchor && engine;
  std::ostringstream d;
  d << "per-NPU wire bytes = " << analytic.network_bytes_sent / 64 << " (2.25N = "
    << chunk * 9 / 4 << "), mem reads = " << analytic.mem_bytes_read / 64 << " (N = " << chunk
    << "), engine match = " << (engine ? "yes" : "no");
  o.detail = d.str();
  return o;
}

// ---- C3: baseline steady-state read ratio ------------------------------------
Outcome c3() {
  Outcome o;
  RingRef ring;
  ring.nodes.resize(16);
  std::iota(ring.nodes.begin(), ring.nodes.end(), 0);
  // 16 message groups of 16 messages each
  const Bytes payload = 16 * 16 * 1024;
  const auto sched = plan_ring_all_reduce(ring, payload, 1024);
  const auto traffic = baseline_traffic(sched);
  const double ratio =
      static_cast<double>(traffic.mem_bytes_read) / static_cast<double>(traffic.network_bytes_sent);
  o.pass = ratio >= 1.5 * 0.95 && ratio <= 1.5 * 1.05;
  std::ostringstream d;
  d << "reads/wire-byte = " << ratio << " with " << sched.plan.phases[0].groups
    << " message groups (target 1.5 within 5%)";
  o.detail = d.str();
  return o;
}

// ---- C4: bandwidth sweep reproduction -----------------------------------------
Outcome c4() {
  Outcome o;
  const Topology t = build_torus(4, 4, 4, {});
  const auto grid = default_bw_grid();
  const auto r = bw_sweep(preset_base(), AceConfig{}, t, CollectiveKind::AllReduce, 64 << 20,
                          64 << 10, 8 << 10, grid, 2);
  const double plateau = r.ideal_plateau_gbps;
  const double bar = 0.9 * plateau;

  auto required = [&](const std::vector<BwSweepPoint>& pts) -> double {
    for (const auto& p : pts) {
      if (p.achieved_network_gbps >= bar) return p.comm_mem_bw_gbps;
    }
    return -1.0;
  };
  const double need_base = required(r.baseline);
  const double need_ace = required(r.ace);

  const bool plateau_ok = plateau >= 270.0 && plateau <= 330.0;
  const bool base_ok = need_base >= 450.0 * 0.85 && need_base <= 450.0 * 1.15;
  const bool ace_ok = need_ace > 0 && need_ace <= 140.0;
  const double ratio = need_ace > 0 ? need_base / need_ace : 0.0;
  const bool ratio_ok = ratio >= 3.0 && ratio <= 3.6;
  o.pass = plateau_ok && base_ok && ace_ok && ratio_ok;
  std::ostringstream d;
  d << "ideal plateau = " << plateau << " GB/s (300 +- 10%); baseline needs " << need_base
    << " GB/s for 90% (450 +- 15%); ACE needs " << need_ace << " GB/s (<= 140); ratio = "
    << ratio << " ([3.0, 3.6])";
  o.detail = d.str();
  return o;
}

// ---- C5: SM sufficiency ---------------------------------------------------------
Outcome c5() {
  Outcome o;
  const Topology t = build_torus(4, 4, 4, {});
  const auto pts = sm_sweep(preset_base(), t, CollectiveKind::AllReduce, 64 << 20, 64 << 10,
                            8 << 10, {1, 6, 80}, 2);
  const double one_sm = pts[0].achieved_network_gbps;
  const double six_sm = pts[1].achieved_network_gbps;
  const double all_sm = pts[2].achieved_network_gbps;
  const bool six_ok = six_sm >= 0.95 * all_sm;
  const bool one_ok = one_sm <= 80.0;
  o.pass = six_ok && one_ok;
  std::ostringstream d;
  d << "6 SMs = " << six_sm << " GB/s vs unlimited " << all_sm << " GB/s (within 5%: "
    << (six_ok ? "yes" : "no") << "); 1 SM = " << one_sm << " GB/s (<= 80: "
    << (one_ok ? "yes" : "no") << ")";
  o.detail = d.str();
  return o;
}

// ---- C6/C7: training matrix -------------------------------------------------------
struct MatrixResult {
  // [trace][size][config] -> metrics
  std::map<std::string, std::map<std::string, std::map<std::string, RunMetrics>>> runs;
};

const std::vector<std::array<int, 3>> kSizes = {{2, 2, 2}, {4, 4, 4}, {4, 8, 4}};
const std::vector<SystemKind> kConfigs = {SystemKind::Ideal, SystemKind::Ace,
                                          SystemKind::BaselineNoOverlap,
                                          SystemKind::BaselineCommOpt,
                                          SystemKind::BaselineCompOpt};

std::string size_name(const std::array<int, 3>& s) {
  return std::to_string(s[0]) + "x" + std::to_string(s[1]) + "x" + std::to_string(s[2]);
}

MatrixResult run_matrix() {
  MatrixResult result;
  struct Job {
    std::string trace;
    std::array<int, 3> size;
    SystemKind kind;
  };
  std::vector<Job> jobs;
  for (const auto& trace : bundled_trace_names()) {
    for (const auto& size : kSizes) {
      for (SystemKind kind : kConfigs) jobs.push_back({trace, size, kind});
    }
  }
  std::vector<RunMetrics> out(jobs.size());
  std::atomic<std::size_t> next{0};
  auto worker = [&] {
    for (std::size_t i = next.fetch_add(1); i < jobs.size(); i = next.fetch_add(1)) {
      const Workload w = bundled_trace(jobs[i].trace);
      const Topology t = build_torus(jobs[i].size[0], jobs[i].size[1], jobs[i].size[2], {});
      out[i] = run_training(w, preset(jobs[i].kind), t);
    }
  };
  std::thread a(worker), b(worker);
  a.join();
  b.join();
  for (std::size_t i = 0; i < jobs.size(); i++) {
    result.runs[jobs[i].trace][size_name(jobs[i].size)][to_string(jobs[i].kind)] = out[i];
  }
  return result;
}

Outcome c6() {
  Outcome o;
  const MatrixResult m = run_matrix();
  bool pass = true;
  std::ostringstream d;
  for (const auto& trace : bundled_trace_names()) {
    for (const auto& size : kSizes) {
      const auto& runs = m.runs.at(trace).at(size_name(size));
      const Cycles ideal = runs.at("ideal").iteration_cycles;
      const Cycles ace = runs.at("ace").iteration_cycles;
      const Cycles best_baseline = std::min({runs.at("baseline_no_overlap").iteration_cycles,
                                             runs.at("baseline_comm_opt").iteration_cycles,
                                             runs.at("baseline_comp_opt").iteration_cycles});
      const double perf_vs_ideal = static_cast<double>(ideal) / static_cast<double>(ace);
      const bool ok = ideal <= ace && ace <= best_baseline && perf_vs_ideal >= 0.80;
      if (!ok) pass = false;
      d << trace << "@" << size_name(size) << " ideal=" << ideal << " ace=" << ace
        << " best_baseline=" << best_baseline << " ace/ideal_perf=" << perf_vs_ideal
        << (ok ? "" : " <-- VIOLATION") << "; ";
    }
  }
  o.pass = pass;
  o.detail = d.str();
  return o;
}

Outcome c7() {
  Outcome o;
  const MatrixResult m = run_matrix();
  bool pass = true;
  std::ostringstream d;
  for (const auto& trace : bundled_trace_names()) {
    for (SystemKind kind : kConfigs) {
      Cycles prev = 0;
      bool mono = true;
      std::ostringstream seq;
      for (const auto& size : kSizes) {
        const Cycles e =
            m.runs.at(trace).at(size_name(size)).at(to_string(kind)).exposed_comm_cycles;
        if (e < prev) mono = false;
        seq << e << " ";
        prev = e;
      }
      if (!mono) pass = false;
      d << trace << "/" << to_string(kind) << ": " << seq.str()
        << (mono ? "(non-decreasing)" : "(VIOLATION)") << "; ";
    }
  }
  o.pass = pass;
  o.detail = d.str();
  return o;
}

// ---- C8: LIFO scheduler ---------------------------------------------------------
Outcome c8() {
  Outcome o;
  const Topology t = build_torus(2, 1, 1, {});
  EndpointSetup s;
  s.datapath = DatapathKind::Ideal;
  s.budget.in_flight_chunks = 1;

  bool order_ok = false;
  {
    Simulator sim(t, s);
    const int a = sim.issue_collective(CollectiveKind::AllReduce, 256 << 10, "A");
    const int b = sim.issue_collective(CollectiveKind::AllReduce, 256 << 10, "B");
    const int c = sim.issue_collective(CollectiveKind::AllReduce, 256 << 10, "C");
    sim.run();
    order_ok = sim.collective_complete_time(c) < sim.collective_complete_time(b) &&
               sim.collective_complete_time(b) < sim.collective_complete_time(a);
  }
  bool preempt_ok = false;
  {
    Simulator sim(t, s);
    const int a = sim.issue_collective(CollectiveKind::AllReduce, 16 << 20, "A");
    int b = -1;
    sim.at(40000, [&] { b = sim.issue_collective(CollectiveKind::AllReduce, 128 << 10, "B"); });
    sim.run();
    preempt_ok = b >= 0 && sim.collective_complete_time(b) < sim.collective_complete_time(a);
  }
  bool single_ok = false;
  {
    Simulator sim(t, s);
    const int a = sim.issue_collective(CollectiveKind::AllReduce, 128 << 10, "A");
    sim.run();
    single_ok = sim.collective_done(a);
  }
  o.pass = order_ok && preempt_ok && single_ok;
  std::ostringstream d;
  d << "stack order " << (order_ok ? "ok" : "VIOLATION") << ", chunk preemption "
    << (preempt_ok ? "ok" : "VIOLATION") << ", single-collective degenerate "
    << (single_ok ? "ok" : "VIOLATION");
  o.detail = d.str();
  return o;
}

// ---- C9: determinism ---------------------------------------------------------------
Outcome c9() {
  Outcome o;
  const char* cfg_text = R"({
    "dims": {"L": 2, "V": 2, "H": 2},
    "system_config": "ace",
    "workload": {"trace": "builtin:dlrm"},
    "seed": 3
  })";
  const RunConfig cfg = parse_config_text(cfg_text);
  const Topology t = make_topology(cfg);
  const SystemConfig sys = make_system(cfg);
  auto report_once = [&] {
    const RunMetrics m = run_training(bundled_trace("dlrm"), sys, t);
    ReportContext ctx;
    ctx.config_hash = config_hash(cfg);
    ctx.seed = cfg.seed;
    ctx.system_config = cfg.system_config;
    ctx.dims_l = cfg.dims_l;
    ctx.dims_v = cfg.dims_v;
    ctx.dims_h = cfg.dims_h;
    ctx.workload = cfg.trace;
    return metrics_to_json(m, ctx);
  };
  const std::string a = report_once();
  const std::string b = report_once();
  o.pass = a == b && a.find("config_hash") != std::string::npos;
  o.detail = o.pass ? "two runs produced byte-identical reports with config hash "
                      + config_hash(cfg)
                    : "reports differ between identical runs";
  return o;
}

// ---- C10: DLRM optimization ----------------------------------------------------------
Outcome c10() {
  Outcome o;
  const Workload w = bundled_trace("dlrm");
  const Topology t = build_torus(4, 4, 4, {});
  const auto ace_def = run_training(w, preset(SystemKind::Ace), t);
  const auto ace_opt = run_dlrm_optimized(w, preset(SystemKind::Ace), t);
  const auto base_def = run_training(w, preset(SystemKind::BaselineCompOpt), t);
  const auto base_opt = run_dlrm_optimized(w, preset(SystemKind::BaselineCompOpt), t);
  const double ratio_ace =
      static_cast<double>(ace_def.iteration_cycles) / ace_opt.iteration_cycles;
  const double ratio_base =
      static_cast<double>(base_def.iteration_cycles) / base_opt.iteration_cycles;
  o.pass = ratio_ace > ratio_base && ratio_base >= 1.0;
  std::ostringstream d;
  d << "optimized-loop speedup: ACE = " << ratio_ace << ", BaselineCompOpt = " << ratio_base
    << " (need ACE > baseline >= 1.0)";
  o.detail = d.str();
  return o;
}

struct Criterion {
  int id;
  const char* name;
  std::function<Outcome()> fn;
};

}  // namespace

int main(int argc, char** argv) {
  int only = 0;
  for (int i = 1; i < argc - 1; i++) {
    if (std::strcmp(argv[i], "--criterion") == 0) only = std::atoi(argv[i + 1]);
  }

  const std::vector<Criterion> criteria = {
      {1, "collective oracle equivalence (<= 16 nodes, 50 vectors)", c1},
      {2, "ACE traffic anchor: 2.25N wire bytes, N memory reads on 4x4x4", c2},
      {3, "baseline steady-state memory-read ratio converges to 1.5", c3},
      {4, "bandwidth sweep: plateau, 450 vs 128 GB/s, required-BW ratio", c4},
      {5, "SM sufficiency: 6 SMs within 5%, 1 SM under 80 GB/s", c5},
      {6, "iteration ordering: ideal <= ace <= best baseline, ace >= 0.8 ideal", c6},
      {7, "weak scaling: exposed communication non-decreasing in node count", c7},
      {8, "LIFO chunk scheduling", c8},
      {9, "determinism: byte-identical reports", c9},
      {10, "DLRM optimized loop: ACE gains more than the baseline", c10},
  };

  int failures = 0;
  for (const auto& c : criteria) {
    if (only != 0 && c.id != only) continue;
    const auto t0 = std::chrono::steady_clock::now();
    Outcome o;
    try {
      o = c.fn();
    } catch (const std::exception& e) {
      o.pass = false;
      o.detail = std::string("exception: ") + e.what();
    }
    const auto secs =
        std::chrono::duration_cast<std::chrono::milliseconds>(std::chrono::steady_clock::now() - t0)
            .count() /
        1000.0;
    std::cout << (o.pass ? "[PASS]" : "[FAIL]") << " C" << c.id << ": " << c.name << " ("
              << secs << "s)\n        " << o.detail << "\n";
    if (!o.pass) failures++;
  }
  return failures;
}
