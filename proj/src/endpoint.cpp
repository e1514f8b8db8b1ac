/******************************************************************************
This source code is licensed under the MIT license found in the
LICENSE file in the root directory of this source tree.
*******************************************************************************/

#include "collfab/endpoint.hpp"

#include <algorithm>
#include <cassert>

namespace collfab {

StepMemOps step_mem_ops(const Step& step, DatapathKind datapath) {
  StepMemOps ops;
  if (datapath != DatapathKind::Baseline) {
    // ACE keeps intermediate data in SRAM (chunk DMA in/out is accounted at
    // chunk granularity, not per step); the ideal endpoint is free.
    if (step.kind == StepKind::LoadFromMemory) ops.read = step.bytes;
    if (step.kind == StepKind::WriteToMemory) ops.write = step.bytes;
    return ops;
  }
  switch (step.kind) {
    case StepKind::SendMsg:
      // Fresh local data and store-and-forward data are read from memory;
      // a just-reduced message leaves straight from the cores.
      if (step.source != SendSource::ReducedData) ops.read = step.bytes;
      break;
    case StepKind::RecvMsg:
      // Every received message round-trips through memory first.
      ops.write = step.bytes;
      break;
    case StepKind::ReduceLocal:
      // local operand + the received message written by the recv
      ops.read = 2 * step.bytes;
      break;
    case StepKind::StoreFinal:
      // A reduced result has to be written out; received data was already
      // written by its receive.
      if (step.store_from_reduce) ops.write = step.bytes;
      break;
    case StepKind::LoadFromMemory:
      ops.read = step.bytes;
      break;
    case StepKind::WriteToMemory:
      ops.write = step.bytes;
      break;
  }
  return ops;
}

namespace {

Bytes recv_bytes_total(const CollectiveSchedule& schedule) {
  Bytes total = 0;
  for (const auto& s : schedule.steps) {
    if (s.kind == StepKind::RecvMsg) total += s.bytes;
  }
  return total;
}

}  // namespace

TrafficReport baseline_traffic(const CollectiveSchedule& schedule) {
  TrafficReport report;
  for (const auto& s : schedule.steps) {
    const StepMemOps ops = step_mem_ops(s, DatapathKind::Baseline);
    report.mem_bytes_read += ops.read;
    report.mem_bytes_written += ops.write;
    if (s.kind == StepKind::SendMsg) report.network_bytes_sent += s.bytes;
  }
  // every sent byte crosses NPU->AFI, every received byte AFI->NPU
  report.bus_npu_afi_bytes = report.network_bytes_sent + recv_bytes_total(schedule);
  report.bus_npu_mem_bytes = report.mem_bytes_read + report.mem_bytes_written;
  return report;
}

TrafficReport ace_traffic(const CollectiveSchedule& schedule) {
  TrafficReport report;
  if (schedule.steps.empty()) return report;
  const auto& phases = schedule.plan.phases;
  const int n = schedule.node_count;
  const Bytes in_bytes = phases.empty() ? 0 : phases.front().input_bytes;
  const Bytes out_bytes = phases.empty() ? 0 : phases.back().result_bytes;
  report.mem_bytes_read = in_bytes * static_cast<Bytes>(n);
  report.mem_bytes_written = out_bytes * static_cast<Bytes>(n);
  report.bus_npu_afi_bytes = report.mem_bytes_read + report.mem_bytes_written;
  report.bus_npu_mem_bytes = report.bus_npu_afi_bytes;
  report.network_bytes_sent = schedule.total_send_bytes();
  // per node, one chunk alone: a phase's input region plus the working set
  // accumulating for the next phase
  Bytes peak = 0;
  for (const auto& p : phases) {
    peak = std::max(peak, p.input_bytes + p.result_bytes);
  }
  report.sram_bytes_peak = peak;
  return report;
}

std::vector<SramPartition> partition_sram(const AceConfig& ace,
                                          const std::vector<PhasePlan>& phases) {
  if (phases.empty()) {
    throw ConfigError("partition_sram: need at least one phase");
  }
  const std::size_t count = phases.size() + 1;  // P phases + terminal
  std::vector<double> weight(count);
  for (std::size_t p = 0; p < phases.size(); p++) {
    weight[p] = phases[p].ring_gbps * static_cast<double>(phases[p].input_bytes);
  }
  weight[count - 1] = weight[count - 2];  // terminal mirrors the last phase
  double total = 0.0;
  for (double w : weight) total += w;
  assert(total > 0.0);

  std::vector<SramPartition> parts(count);
  Bytes used = 0;
  for (std::size_t p = 0; p < count; p++) {
    Bytes bytes = static_cast<Bytes>(static_cast<double>(ace.sram_bytes) * (weight[p] / total));
    bytes -= bytes % kPacketBytes;  // round down to packet multiples
    parts[p].bytes = bytes;
    used += bytes;
  }
  parts[0].bytes += ace.sram_bytes - used;  // remainder to partition 1
  Bytes offset = 0;
  for (auto& part : parts) {
    part.offset = offset;
    offset += part.bytes;
  }
  // each partition must hold at least one message of its phase
  for (std::size_t p = 0; p < phases.size(); p++) {
    if (parts[p].bytes < phases[p].msg_bytes) {
      throw ConfigError("ace.sram_mib too small: partition " + std::to_string(p + 1) +
                        " cannot hold one message");
    }
  }
  if (parts.back().bytes < phases.back().msg_bytes) {
    throw ConfigError("ace.sram_mib too small: terminal partition cannot hold one message");
  }
  return parts;
}

namespace {

// FSM counts per phase: at least one each, the rest spread by the phase's
// share of ring time (bytes moved over ring bandwidth).
std::vector<int> fsm_split(const AceConfig& ace, const std::vector<PhasePlan>& phases) {
  const int p_count = static_cast<int>(phases.size());
  std::vector<int> counts(p_count, 1);
  int left = ace.fsm_count - p_count;
  if (left <= 0) return counts;
  std::vector<double> share(p_count, 0.0);
  double total = 0.0;
  for (int p = 0; p < p_count; p++) {
    const auto& ph = phases[p];
    const double vol = static_cast<double>(ph.input_bytes) * (ph.ring_len - 1) / ph.ring_len;
    share[p] = ph.ring_gbps > 0 ? vol / ph.ring_gbps : vol;
    total += share[p];
  }
  if (total <= 0.0) total = 1.0;
  int assigned = 0;
  for (int p = 0; p < p_count; p++) {
    const int extra = static_cast<int>(share[p] / total * left);
    counts[p] += extra;
    assigned += extra;
  }
  for (int p = 0; assigned < left; p = (p + 1) % p_count, assigned++) {
    counts[p]++;  // leftovers round-robin
  }
  return counts;
}

}  // namespace

std::vector<int> fsm_pool_for_phase(const AceConfig& ace, const std::vector<PhasePlan>& phases,
                                    int phase) {
  const int p_count = static_cast<int>(phases.size());
  assert(p_count >= 1 && phase >= 0 && phase < p_count);
  if (p_count == 1) {
    std::vector<int> all(ace.fsm_count);
    for (int f = 0; f < ace.fsm_count; f++) all[f] = f;
    return all;
  }
  const auto counts = fsm_split(ace, phases);
  int first = 0;
  for (int p = 0; p < phase; p++) first += counts[p];
  std::vector<int> pool;
  for (int f = first; f < first + counts[phase] && f < ace.fsm_count; f++) pool.push_back(f);
  if (pool.empty()) pool.push_back(phase % ace.fsm_count);
  return pool;
}

int assign_fsm(const AceConfig& ace, const std::vector<PhasePlan>& phases, int phase,
               std::uint32_t chunk_seq) {
  const auto pool = fsm_pool_for_phase(ace, phases, phase);
  return pool[chunk_seq % pool.size()];
}

double compute_slowdown_factor(const ResourceBudget& budget) {
  if (budget.sm_comm >= budget.sm_total) {
    throw ConfigError("sm_comm leaves no compute SMs");
  }
  if (budget.mem_bw_comm_gbps >= budget.mem_bw_gbps) {
    throw ConfigError("mem_bw_comm_gbps leaves no compute memory bandwidth");
  }
  const double sm_factor = static_cast<double>(budget.sm_total) /
                           static_cast<double>(budget.sm_total - budget.sm_comm);
  const double mem_factor = budget.mem_bw_gbps / (budget.mem_bw_gbps - budget.mem_bw_comm_gbps);
  return sm_factor > mem_factor ? sm_factor : mem_factor;
}

Cycles effective_compute_time(Cycles base_cycles, const ResourceBudget& budget) {
  const double factor = compute_slowdown_factor(budget);
  return static_cast<Cycles>(static_cast<double>(base_cycles) * factor + 0.5);
}

}  // namespace collfab
