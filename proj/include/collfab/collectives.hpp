/******************************************************************************
This source code is licensed under the MIT license found in the
LICENSE file in the root directory of this source tree.
*******************************************************************************/

#ifndef COLLFAB_COLLECTIVES_HPP
#define COLLFAB_COLLECTIVES_HPP

#include <cstdint>
#include <string>
#include <vector>

#include "collfab/topology.hpp"

namespace collfab {

enum class CollectiveKind : std::uint8_t { ReduceScatter, AllGather, AllReduce, AllToAll };

const char* to_string(CollectiveKind k);

enum class StepKind : std::uint8_t {
  SendMsg,
  RecvMsg,
  ReduceLocal,
  StoreFinal,
  LoadFromMemory,
  WriteToMemory,
};

// What a SendMsg transmits. Drives the baseline memory accounting: local data
// and forwarded data are read back from memory before injection, a freshly
// reduced message leaves straight from the cores.
enum class SendSource : std::uint8_t { LocalData, ReducedData, ForwardedData };

constexpr std::uint32_t kNoId = 0xffffffffu;

struct Step {
  std::uint32_t id = 0;
  int node = 0;
  StepKind kind = StepKind::SendMsg;
  Bytes bytes = 0;
  // Byte range [range_offset, range_offset+bytes) in the per-node chunk state
  // this step reads (send), accumulates into (reduce) or writes (store).
  Bytes range_offset = 0;
  // Send/recv pairing id. For SendMsg the id of the transfer it starts; for
  // RecvMsg the transfer it completes.
  std::uint32_t pair = kNoId;
  // For forwarded sends: the pair id whose received payload is relayed.
  std::uint32_t fwd_of = kNoId;
  int peer = -1;
  int link_id = -1;
  SendSource source = SendSource::LocalData;
  // StoreFinal: true when storing a locally reduced result (costs a memory
  // write in the baseline), false when storing a received message (already
  // written by the receive round-trip).
  bool store_from_reduce = false;
  std::uint16_t phase = 0;
};

// Per-phase decomposition of one chunk: which ring it runs on and how the
// phase payload splits into message groups.
struct PhasePlan {
  Dim dim = Dim::Local;
  int ring_len = 1;
  int groups = 1;
  Bytes msg_bytes = 0;
  Bytes input_bytes = 0;   // per-node bytes entering this phase
  Bytes result_bytes = 0;  // per-node bytes produced for the next phase
  double ring_gbps = 0.0;  // nominal bandwidth of the phase's ring (both directions)
};

struct ChunkPlan {
  std::uint32_t chunk_id = 0;
  Bytes payload_bytes = 0;
  Bytes padded_bytes = 0;
  Bytes pad_bytes = 0;
  Bytes message_bytes = 0;  // requested message size
  std::vector<PhasePlan> phases;
};

// Steps for one collective over one chunk, across all participating nodes.
// Dependencies form a DAG; execution order is any topological order.
struct CollectiveSchedule {
  CollectiveKind kind = CollectiveKind::AllReduce;
  int node_count = 0;
  ChunkPlan plan;
  std::vector<Step> steps;
  // CSR dependency lists: deps of step i are dep_edges[dep_start[i]..dep_start[i+1])
  std::vector<std::uint32_t> dep_start;
  std::vector<std::uint32_t> dep_edges;
  std::uint32_t pair_count = 0;
  std::vector<std::uint32_t> send_of_pair;
  std::vector<std::uint32_t> recv_of_pair;

  int phase_count() const { return static_cast<int>(plan.phases.size()); }
  Bytes total_send_bytes() const;
  Bytes node_send_bytes(int node) const;
  // Throws ScheduleError on dangling pairs or dependency cycles.
  void validate() const;
  std::string dump_jsonl() const;
};

// A ring to plan over. When `topo` is set the ring must follow consecutive
// +1 neighbors in `dim` so sends can be bound to physical links; without it
// the schedule is functional only (oracle checks, unit tests).
struct RingRef {
  std::vector<int> nodes;
  const Topology* topo = nullptr;
  Dim dim = Dim::Local;
};

// Ring planners. `dir_flip` flips which message groups take which ring
// direction so successive chunks exercise both directions of a bidirectional
// ring. Segment ownership is fixed: ring position i ends owning segment
// (i+1) mod k.
CollectiveSchedule plan_ring_reduce_scatter(const RingRef& ring, Bytes payload_bytes,
                                            Bytes message_bytes, bool dir_flip = false);
CollectiveSchedule plan_ring_all_gather(const RingRef& ring, Bytes payload_bytes,
                                        Bytes message_bytes, bool dir_flip = false);
CollectiveSchedule plan_ring_all_reduce(const RingRef& ring, Bytes payload_bytes,
                                        Bytes message_bytes, bool dir_flip = false);

// 4-phase hierarchical all-reduce: reduce-scatter on the local ring,
// all-reduce on the vertical then horizontal rings over the owned segment,
// all-gather on the local ring. Degenerate dimensions drop their phase.
CollectiveSchedule plan_hierarchical_all_reduce(const Topology& topo, Bytes chunk_bytes,
                                                Bytes message_bytes, bool dir_flip = false);

// Direct all-to-all: every node sends a distinct portion to every other node
// along the XYZ route, relayed hop by hop.
CollectiveSchedule plan_direct_all_to_all(const Topology& topo, Bytes payload_bytes,
                                          Bytes message_bytes);

// Functional reference executor. `initial` holds one integer vector per node,
// each of length plan.padded_bytes / 4 (4 bytes per element). Executes the
// schedule in a topological order and returns the final per-node vectors.
std::vector<std::vector<std::int64_t>> execute_oracle(
    const CollectiveSchedule& schedule, const std::vector<std::vector<std::int64_t>>& initial);

constexpr Bytes kOracleElemBytes = 4;

}  // namespace collfab

#endif
