/******************************************************************************
This source code is licensed under the MIT license found in the
LICENSE file in the root directory of this source tree.
*******************************************************************************/

#ifndef COLLFAB_ENGINE_HPP
#define COLLFAB_ENGINE_HPP

#include <deque>
#include <functional>
#include <map>
#include <memory>
#include <queue>
#include <string>
#include <vector>

#include "collfab/endpoint.hpp"
#include "collfab/topology.hpp"

namespace collfab {

// Bandwidth-latency channel with implicit FIFO queuing: a transfer of b bytes
// occupies the channel for ceil(b / (capacity * efficiency)) cycles starting
// when the previous transfer's occupancy ends; latency pipelines on top.
struct Channel {
  std::uint64_t eff_milli_bpc = 0;  // capacity*efficiency, milli-bytes/cycle
  Cycles latency = 0;
  Cycles busy_until = 0;
  Bytes injected_bytes = 0;
  Bytes delivered_bytes = 0;
  int link_id = -1;  // >= 0 for fabric links

  Cycles occupancy(Bytes bytes) const {
    return static_cast<Cycles>(ceil_div(bytes * 1000ull, eff_milli_bpc));
  }
};

struct TransferTiming {
  Cycles start = 0;
  Cycles injected = 0;  // start + occupancy
  Cycles arrival = 0;   // injected + latency
};

// Pure submission arithmetic, exposed for unit tests.
TransferTiming submit_transfer(Channel& ch, Bytes bytes, Cycles now);

struct EndpointSetup {
  DatapathKind datapath = DatapathKind::Baseline;
  ResourceBudget budget;
  AceConfig ace;
  Bytes chunk_bytes = 64ull << 10;
  Bytes message_bytes = 8ull << 10;
};

struct LinkWindowStats {
  Cycles window_cycles = 1000;
  // windows[w] = number of links active at least one cycle in window w
  std::vector<std::uint32_t> active_links;
};

struct EngineStats {
  TrafficReport traffic;        // summed over nodes
  Bytes reduced_bytes = 0;      // total bytes through reductions
  Cycles alu_busy_cycles = 0;   // ACE ALU channel busy time, summed over nodes
  Bytes sram_peak_bytes = 0;    // max per-node SRAM occupancy observed
  LinkWindowStats windows;
  std::vector<Bytes> link_delivered;  // per link id
  std::vector<Bytes> link_injected;
  std::vector<Cycles> link_busy_cycles;
  std::uint64_t events_processed = 0;
};

// Deterministic single-threaded discrete-event simulator for one fabric.
// Collectives are chunked, admitted LIFO (most recently issued collective
// first) and executed through the endpoint datapath.
class Simulator {
 public:
  Simulator(const Topology& topo, const EndpointSetup& setup);
  ~Simulator();

  Cycles now() const { return now_; }

  // Schedules fn at absolute cycle t (>= now).
  void at(Cycles t, std::function<void()> fn);

  // Issues a collective of `payload` bytes per node. Returns a handle.
  int issue_collective(CollectiveKind kind, Bytes payload, std::string name);

  bool collective_done(int id) const;
  Cycles collective_issue_time(int id) const;
  Cycles collective_complete_time(int id) const;
  void on_collective_done(int id, std::function<void()> fn);

  // Runs until the event queue drains. Throws DeadlockError if steps remain
  // blocked with no pending events.
  void run();

  const EngineStats& stats() const { return stats_; }
  const Topology& topology() const { return topo_; }
  const EndpointSetup& setup() const { return setup_; }

  // Planner cache shared across chunks; exposed for schedule dumping.
  const CollectiveSchedule& schedule_for(CollectiveKind kind, Bytes bytes, bool flip);

 private:
  struct Impl;
  std::unique_ptr<Impl> impl_;
  const Topology& topo_;
  EndpointSetup setup_;
  Cycles now_ = 0;
  EngineStats stats_;

  friend struct Impl;
};

}  // namespace collfab

#endif
