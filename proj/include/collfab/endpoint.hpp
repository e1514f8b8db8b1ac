/******************************************************************************
This source code is licensed under the MIT license found in the
LICENSE file in the root directory of this source tree.
*******************************************************************************/

#ifndef COLLFAB_ENDPOINT_HPP
#define COLLFAB_ENDPOINT_HPP

#include <cstdint>
#include <vector>

#include "collfab/collectives.hpp"

namespace collfab {

enum class DatapathKind : std::uint8_t {
  // NPU cores drive the collective; every message round-trips through main
  // memory on its way in and out of the fabric interface.
  Baseline,
  // Endpoint offload engine: one DMA in, one DMA out, everything between
  // lives in its SRAM.
  Ace,
  // Received data is usable one cycle after arrival; no endpoint resources.
  Ideal,
};

struct ResourceBudget {
  double mem_bw_gbps = 900.0;       // total NPU memory bandwidth
  double mem_bw_comm_gbps = 0.0;    // slice reserved for communication
  int sm_total = 80;
  int sm_comm = 0;
  Bytes per_sm_bytes_per_cycle = 64;  // ~80 GB/s per SM at the global clock
  double bus_npu_afi_gbps = 500.0;
  double bus_npu_mem_gbps = 900.0;
  // In-flight chunk window for NPU-driven datapaths. Deeper windows make the
  // FIFO links round-robin every live chunk, which serializes the phases
  // globally instead of pipelining them. -1 picks a per-datapath default
  // (16, or 24 for the baseline whose memory round-trips want more cover);
  // 0 means unlimited.
  int in_flight_chunks = -1;

  // Baseline communication is throttled by whichever runs out first: the
  // reserved memory bandwidth or what the ceded SMs can stream.
  double effective_comm_read_gbps() const {
    const double sm_bw = gbps_from_bytes_per_cycle(
        static_cast<double>(per_sm_bytes_per_cycle) * static_cast<double>(sm_comm));
    return mem_bw_comm_gbps < sm_bw ? mem_bw_comm_gbps : sm_bw;
  }
};

struct AceConfig {
  Bytes sram_bytes = 4ull << 20;
  int fsm_count = 16;
  int alu_count = 4;
  // Each ALU reduces 16xFP32 or 32xFP16 lanes per cycle; 64 bytes either way.
  Bytes alu_width_bytes = 64;
  double dma_gbps = 128.0;  // memory bandwidth budget of the TX/RX DMAs
};

struct SramPartition {
  Bytes offset = 0;
  Bytes bytes = 0;
};

struct ChunkContext {
  std::uint32_t chunk_id = 0;
  int phase = 0;
  Bytes sram_begin = 0;
  Bytes sram_end = 0;
  Bytes result_begin = 0;
  Bytes result_end = 0;
  std::vector<int> fsm_per_phase;
};

struct TrafficReport {
  Bytes mem_bytes_read = 0;
  Bytes mem_bytes_written = 0;
  Bytes bus_npu_afi_bytes = 0;
  Bytes bus_npu_mem_bytes = 0;
  Bytes network_bytes_sent = 0;
  Bytes sram_bytes_peak = 0;

  TrafficReport& operator+=(const TrafficReport& o) {
    mem_bytes_read += o.mem_bytes_read;
    mem_bytes_written += o.mem_bytes_written;
    bus_npu_afi_bytes += o.bus_npu_afi_bytes;
    bus_npu_mem_bytes += o.bus_npu_mem_bytes;
    network_bytes_sent += o.network_bytes_sent;
    sram_bytes_peak = sram_bytes_peak > o.sram_bytes_peak ? sram_bytes_peak : o.sram_bytes_peak;
    return *this;
  }
};

// Memory traffic a single schedule step causes on its node, per datapath.
// Shared by the analytic accounting and the event engine so both always
// agree byte for byte.
struct StepMemOps {
  Bytes read = 0;
  Bytes write = 0;
};
StepMemOps step_mem_ops(const Step& step, DatapathKind datapath);

// Analytic per-NPU traffic of one chunk schedule on the baseline datapath.
// Counters are summed over all nodes and divided by the node count by the
// caller when a per-NPU view is wanted; here totals are returned.
TrafficReport baseline_traffic(const CollectiveSchedule& schedule);

// Same for the offload engine: payload in once, result out once, the rest
// stays in SRAM.
TrafficReport ace_traffic(const CollectiveSchedule& schedule);

// SRAM partitioning heuristic: partition p is sized proportionally to
// (phase ring bandwidth x phase input bytes); the terminal partition that
// stages RX DMA results equals the last phase's partition. Sizes round down
// to packet multiples, remainder goes to partition 1.
std::vector<SramPartition> partition_sram(const AceConfig& ace,
                                          const std::vector<PhasePlan>& phases);

// Round-robin FSM assignment. FSMs are split across phases proportionally to
// each phase's expected time share (all of them when there is one phase);
// chunks take turns within a phase's pool.
int assign_fsm(const AceConfig& ace, const std::vector<PhasePlan>& phases, int phase,
               std::uint32_t chunk_seq);
std::vector<int> fsm_pool_for_phase(const AceConfig& ace, const std::vector<PhasePlan>& phases,
                                    int phase);

// Roofline-style slowdown for compute when part of the SMs and memory
// bandwidth are reserved for communication.
Cycles effective_compute_time(Cycles base_cycles, const ResourceBudget& budget);
double compute_slowdown_factor(const ResourceBudget& budget);

}  // namespace collfab

#endif
