/******************************************************************************
This source code is licensed under the MIT license found in the
LICENSE file in the root directory of this source tree.
*******************************************************************************/

#ifndef COLLFAB_WORKLOAD_HPP
#define COLLFAB_WORKLOAD_HPP

#include <string>
#include <vector>

#include "collfab/engine.hpp"

namespace collfab {

enum class CommTrigger : std::uint8_t { None, AfterWeightGrad, FwdEmbedding };

struct Layer {
  std::string name;
  Cycles fwd_cycles = 0;
  Cycles ig_cycles = 0;
  Cycles wg_cycles = 0;
  CollectiveKind comm_kind = CollectiveKind::AllReduce;
  Bytes comm_bytes = 0;
  CommTrigger trigger = CommTrigger::None;
};

struct Workload {
  std::string model;
  std::string parallelism;  // "data" or "hybrid"
  int minibatch = 0;
  std::vector<Layer> layers;

  int embedding_layer() const;  // index of the FwdEmbedding layer, -1 if none
  Cycles iteration_compute_cycles() const;
};

// JSON-lines trace format: a metadata header line followed by one layer per
// line. Parse errors name the offending line.
Workload load_trace(const std::string& path);
void save_trace(const Workload& w, const std::string& path);

// Deterministic synthetic traces shaped like the usual suspects: many small
// all-reduces (resnet50), few large all-reduces (gnmt), MLP all-reduces plus
// embedding all-to-alls (dlrm).
Workload bundled_trace(const std::string& name);
std::vector<std::string> bundled_trace_names();

enum class SystemKind : std::uint8_t {
  BaselineNoOverlap,
  BaselineCommOpt,
  BaselineCompOpt,
  Ace,
  Ideal,
};
const char* to_string(SystemKind k);
SystemKind system_kind_from(const std::string& name);

struct SystemConfig {
  SystemKind kind = SystemKind::Ace;
  EndpointSetup setup;            // drives the engine datapath
  ResourceBudget compute_budget;  // drives the compute slowdown factor
};

// Applies the per-system resource splits to a base budget. Overrides of
// mem_bw_comm_gbps / sm_comm from the config are taken from `base` for the
// baseline systems (sweeps rely on this).
SystemConfig make_system_config(SystemKind kind, const ResourceBudget& base, const AceConfig& ace,
                                Bytes chunk_bytes, Bytes message_bytes);

struct CollectiveLatency {
  std::string name;
  Cycles issue = 0;
  Cycles complete = 0;
};

struct RunMetrics {
  Cycles iteration_cycles = 0;  // full two-iteration run
  Cycles total_compute_cycles = 0;
  Cycles exposed_comm_cycles = 0;
  TrafficReport traffic;
  Cycles window_cycles = 1000;
  std::vector<double> utilization;  // fraction of links active per window
  std::vector<CollectiveLatency> collectives;
  double effective_network_gbps = 0.0;
  Bytes network_bytes_delivered = 0;
  std::uint64_t events = 0;
};

// Two training iterations. Back-propagation issues each layer's collective
// after its weight-gradient compute; the next iteration's forward pass blocks
// per layer on the previous iteration's collective. LIFO chunk scheduling.
RunMetrics run_training(const Workload& w, const SystemConfig& sys, const Topology& topo);

// DLRM-optimized loop: the next iteration's embedding lookup and the previous
// iteration's embedding update run on a reserved 1 SM + 80 GB/s background
// track; the forward all-to-all issues as soon as the background lookup
// finishes.
RunMetrics run_dlrm_optimized(const Workload& w, const SystemConfig& sys, const Topology& topo);

// Single collective, no compute. Used by the sensitivity sweeps.
RunMetrics run_microbenchmark(CollectiveKind kind, Bytes payload, const SystemConfig& sys,
                              const Topology& topo);

}  // namespace collfab

#endif
