/******************************************************************************
This source code is licensed under the MIT license found in the
LICENSE file in the root directory of this source tree.
*******************************************************************************/

#include "collfab/analytics.hpp"

#include <atomic>
#include <cstdio>
#include <fstream>
#include <random>
#include <sstream>
#include <thread>

#include <json.hpp>

namespace collfab {

using json = nlohmann::ordered_json;

double hierarchical_traffic_ratio(int l_dim, int v_dim, int h_dim) {
  const double L = l_dim, V = v_dim, H = h_dim;
  double ratio = 0.0;
  if (l_dim >= 2) ratio += (L - 1.0) / L;                // local reduce-scatter
  if (v_dim >= 2) ratio += 2.0 * (V - 1.0) / V / L;      // vertical all-reduce on 1/L
  if (h_dim >= 2) ratio += 2.0 * (H - 1.0) / H / L;      // horizontal all-reduce on 1/L
  if (l_dim >= 2) ratio += (L - 1.0) / L;                // local all-gather
  return ratio;
}

double required_mem_bw_analytic(CollectiveKind kind, int l_dim, int v_dim, int h_dim,
                                double target_network_gbps, DatapathKind datapath) {
  if (kind != CollectiveKind::AllReduce) {
    throw ConfigError("required_mem_bw_analytic models all-reduce only");
  }
  if (target_network_gbps <= 0.0) return 0.0;
  if (datapath == DatapathKind::Baseline) {
    // 2 reads per wire byte in reduce-scatter, 1 in all-gather, equal volume
    return 1.5 * target_network_gbps;
  }
  const double ratio = hierarchical_traffic_ratio(l_dim, v_dim, h_dim);
  if (ratio <= 0.0) return 0.0;
  return target_network_gbps / ratio;  // each payload byte is read once
}

std::vector<double> default_bw_grid() {
  return {32, 64, 96, 128, 192, 256, 384, 450, 512, 768, 900};
}

namespace {

// tiny index-parallel runner for independent sweep points
void parallel_for(int jobs, std::size_t count, const std::function<void(std::size_t)>& fn) {
  if (jobs <= 1 || count <= 1) {
    for (std::size_t i = 0; i < count; i++) fn(i);
    return;
  }
  std::atomic<std::size_t> next{0};
  std::vector<std::thread> pool;
  const int threads = std::min<std::size_t>(jobs, count);
  for (int t = 0; t < threads; t++) {
    pool.emplace_back([&] {
      for (std::size_t i = next.fetch_add(1); i < count; i = next.fetch_add(1)) fn(i);
    });
  }
  for (auto& th : pool) th.join();
}

}  // namespace

BwSweepResult bw_sweep(const ResourceBudget& base, const AceConfig& ace, const Topology& topo,
                       CollectiveKind kind, Bytes payload_bytes, Bytes chunk_bytes,
                       Bytes message_bytes, const std::vector<double>& grid, int jobs) {
  BwSweepResult result;
  ResourceBudget ideal_base = base;
  ideal_base.mem_bw_comm_gbps = -1.0;
  ideal_base.sm_comm = -1;
  const SystemConfig ideal =
      make_system_config(SystemKind::Ideal, ideal_base, ace, chunk_bytes, message_bytes);
  result.ideal_plateau_gbps =
      run_microbenchmark(kind, payload_bytes, ideal, topo).effective_network_gbps;

  result.baseline.resize(grid.size());
  result.ace.resize(grid.size());
  parallel_for(jobs, grid.size() * 2, [&](std::size_t idx) {
    const bool is_ace = idx >= grid.size();
    const std::size_t g = idx % grid.size();
    ResourceBudget b = base;
    b.mem_bw_comm_gbps = grid[g];
    b.sm_comm = is_ace ? 0 : base.sm_total;  // baseline: all SMs available
    const SystemConfig sys = make_system_config(
        is_ace ? SystemKind::Ace : SystemKind::BaselineCommOpt, b, ace, chunk_bytes,
        message_bytes);
    const RunMetrics m = run_microbenchmark(kind, payload_bytes, sys, topo);
    BwSweepPoint pt;
    pt.comm_mem_bw_gbps = grid[g];
    pt.achieved_network_gbps = m.effective_network_gbps;
    pt.fraction_of_ideal =
        result.ideal_plateau_gbps > 0 ? pt.achieved_network_gbps / result.ideal_plateau_gbps : 0;
    (is_ace ? result.ace : result.baseline)[g] = pt;
  });
  return result;
}

std::vector<SmSweepPoint> sm_sweep(const ResourceBudget& base, const Topology& topo,
                                   CollectiveKind kind, Bytes payload_bytes, Bytes chunk_bytes,
                                   Bytes message_bytes, const std::vector<int>& sm_grid,
                                   int jobs) {
  std::vector<SmSweepPoint> points(sm_grid.size());
  AceConfig ace;  // unused by the baseline datapath
  parallel_for(jobs, sm_grid.size(), [&](std::size_t g) {
    SmSweepPoint pt;
    pt.sm_comm = sm_grid[g];
    if (sm_grid[g] == 0) {
      // no cores to drive the network at all
      pt.achieved_network_gbps = 0.0;
    } else {
      ResourceBudget b = base;
      b.mem_bw_comm_gbps = b.mem_bw_gbps;  // all memory BW available to comm
      b.sm_comm = sm_grid[g];
      const SystemConfig sys = make_system_config(SystemKind::BaselineCommOpt, b, ace,
                                                  chunk_bytes, message_bytes);
      pt.achieved_network_gbps =
          run_microbenchmark(kind, payload_bytes, sys, topo).effective_network_gbps;
    }
    points[g] = pt;
  });
  return points;
}

// ---- reports ------------------------------------------------------------------

std::string metrics_to_json(const RunMetrics& m, const ReportContext& ctx) {
  json j;
  j["schema_version"] = 1;
  j["config_hash"] = ctx.config_hash;
  j["seed"] = ctx.seed;
  j["system_config"] = ctx.system_config;
  j["dims"] = {{"L", ctx.dims_l}, {"V", ctx.dims_v}, {"H", ctx.dims_h}};
  j["workload"] = ctx.workload;
  json mm;
  mm["iteration_cycles"] = m.iteration_cycles;
  mm["total_compute_cycles"] = m.total_compute_cycles;
  mm["exposed_comm_cycles"] = m.exposed_comm_cycles;
  mm["effective_network_gbps"] = m.effective_network_gbps;
  mm["network_bytes_delivered"] = m.network_bytes_delivered;
  mm["window_cycles"] = m.window_cycles;
  mm["utilization_windows"] = m.utilization.size();
  mm["events"] = m.events;
  json t;
  t["mem_bytes_read"] = m.traffic.mem_bytes_read;
  t["mem_bytes_written"] = m.traffic.mem_bytes_written;
  t["bus_npu_afi_bytes"] = m.traffic.bus_npu_afi_bytes;
  t["bus_npu_mem_bytes"] = m.traffic.bus_npu_mem_bytes;
  t["network_bytes_sent"] = m.traffic.network_bytes_sent;
  t["sram_bytes_peak"] = m.traffic.sram_bytes_peak;
  mm["traffic"] = t;
  j["metrics"] = mm;
  json colls = json::array();
  for (const auto& c : m.collectives) {
    colls.push_back({{"name", c.name}, {"issue", c.issue}, {"complete", c.complete}});
  }
  j["collectives"] = colls;
  return j.dump(2) + "\n";
}

void write_report(const std::string& path, const RunMetrics& m, const ReportContext& ctx) {
  std::ofstream out(path);
  if (!out) throw ConfigError("cannot write report " + path);
  out << metrics_to_json(m, ctx);
}

void write_timeline_csv(const std::string& path, const RunMetrics& m) {
  std::ofstream out(path);
  if (!out) throw ConfigError("cannot write timeline " + path);
  out << "window_index,utilization\n";
  char buf[64];
  for (std::size_t i = 0; i < m.utilization.size(); i++) {
    std::snprintf(buf, sizeof(buf), "%zu,%.6f\n", i, m.utilization[i]);
    out << buf;
  }
}

// ---- oracle equivalence ----------------------------------------------------------

namespace {

using Vec = std::vector<std::int64_t>;

std::vector<Vec> random_vectors(int nodes, std::size_t elems, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::vector<Vec> v(nodes, Vec(elems));
  for (auto& node : v) {
    for (auto& x : node) x = static_cast<std::int64_t>(rng() % 2001) - 1000;
  }
  return v;
}

std::string describe(const char* what, int L, int V, int H, Bytes payload, int trial, int node,
                     std::size_t elem, std::int64_t got, std::int64_t want) {
  std::ostringstream os;
  os << what << " mismatch: dims " << L << "x" << V << "x" << H << " payload " << payload
     << "B trial " << trial << " node " << node << " elem " << elem << " got " << got
     << " want " << want;
  return os.str();
}

}  // namespace

OracleCheckResult run_oracle_check(int max_nodes, int vectors) {
  OracleCheckResult result;
  const Bytes msg_bytes = 64;  // small messages force multiple groups and rounds

  for (int L = 1; L <= max_nodes; L++) {
    for (int V = 1; V <= max_nodes / L; V++) {
      for (int H = 1; H <= max_nodes / (L * V); H++) {
        const int n = L * V * H;
        if (n < 2) continue;
        const Topology topo = build_torus(L, V, H, {});
        // payload sizes exercise both clean division and padding
        const std::vector<Bytes> payloads = {static_cast<Bytes>(4 * n * 4),
                                             static_cast<Bytes>(4 * n * 4 + 4), 260};

        for (std::size_t pi = 0; pi < payloads.size(); pi++) {
          const Bytes payload = payloads[pi];
          // full trial count on the clean payload, spot checks on padded ones
          const int trials = pi == 0 ? vectors : std::min(vectors, 2);
          // hierarchical all-reduce on the torus
          const auto ar = plan_hierarchical_all_reduce(topo, payload, msg_bytes, (payload % 8) == 4);
          // flat-ring reduce-scatter / all-gather over all nodes in id order
          RingRef flat;
          for (int i = 0; i < n; i++) flat.nodes.push_back(i);
          const auto rs = plan_ring_reduce_scatter(flat, payload, msg_bytes);
          const auto ag = plan_ring_all_gather(flat, payload, msg_bytes);
          const auto a2a = plan_direct_all_to_all(topo, payload, msg_bytes);

          for (int trial = 0; trial < trials; trial++) {
            const std::uint64_t seed =
                fnv1a(std::to_string(n) + ":" + std::to_string(payload) + ":" +
                      std::to_string(trial));

            // all-reduce: every element equals the sum over nodes
            {
              const std::size_t elems = ar.plan.padded_bytes / kOracleElemBytes;
              const auto init = random_vectors(n, elems, seed);
              const auto out = execute_oracle(ar, init);
              result.cases++;
              for (int node = 0; node < n && result.ok; node++) {
                for (std::size_t e = 0; e < elems; e++) {
                  std::int64_t want = 0;
                  for (int m = 0; m < n; m++) want += init[m][e];
                  if (out[node][e] != want) {
                    result.ok = false;
                    result.counterexample = describe("all_reduce", L, V, H, payload, trial, node,
                                                     e, out[node][e], want);
                    break;
                  }
                }
              }
            }
            if (!result.ok) return result;

            // reduce-scatter: ring position i owns segment (i+1) mod n
            {
              const std::size_t elems = rs.plan.padded_bytes / kOracleElemBytes;
              const std::size_t seg = elems / n;
              const auto init = random_vectors(n, elems, seed ^ 0x5f5f);
              const auto out = execute_oracle(rs, init);
              result.cases++;
              for (int node = 0; node < n && result.ok; node++) {
                const std::size_t own = static_cast<std::size_t>((node + 1) % n) * seg;
                for (std::size_t e = own; e < own + seg; e++) {
                  std::int64_t want = 0;
                  for (int m = 0; m < n; m++) want += init[m][e];
                  if (out[node][e] != want) {
                    result.ok = false;
                    result.counterexample = describe("reduce_scatter", L, V, H, payload, trial,
                                                     node, e, out[node][e], want);
                    break;
                  }
                }
              }
            }
            if (!result.ok) return result;

            // all-gather: segment j comes from its owner, ring position (j-1+n) mod n
            {
              const std::size_t elems = ag.plan.padded_bytes / kOracleElemBytes;
              const std::size_t seg = elems / n;
              const auto init = random_vectors(n, elems, seed ^ 0xa0a0);
              const auto out = execute_oracle(ag, init);
              result.cases++;
              for (int node = 0; node < n && result.ok; node++) {
                for (std::size_t e = 0; e < elems; e++) {
                  const int owner = static_cast<int>((e / seg + n - 1) % n);
                  const std::int64_t want = init[owner][e];
                  if (out[node][e] != want) {
                    result.ok = false;
                    result.counterexample = describe("all_gather", L, V, H, payload, trial, node,
                                                     e, out[node][e], want);
                    break;
                  }
                }
              }
            }
            if (!result.ok) return result;

            // all-to-all: the portion matrix transposes
            {
              const std::size_t elems = a2a.plan.padded_bytes / kOracleElemBytes;
              const std::size_t portion = elems / n;
              const auto init = random_vectors(n, elems, seed ^ 0xc3c3);
              const auto out = execute_oracle(a2a, init);
              result.cases++;
              for (int node = 0; node < n && result.ok; node++) {
                for (std::size_t e = 0; e < elems; e++) {
                  const int from = static_cast<int>(e / portion);
                  const std::int64_t want =
                      init[from][static_cast<std::size_t>(node) * portion + e % portion];
                  if (out[node][e] != want) {
                    result.ok = false;
                    result.counterexample = describe("all_to_all", L, V, H, payload, trial, node,
                                                     e, out[node][e], want);
                    break;
                  }
                }
              }
            }
            if (!result.ok) return result;
          }
        }
      }
    }
  }
  return result;
}

}  // namespace collfab
