/******************************************************************************
This source code is licensed under the MIT license found in the
LICENSE file in the root directory of this source tree.
*******************************************************************************/

#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "collfab/engine.hpp"

using namespace collfab;

namespace {

EndpointSetup ideal_setup() {
  EndpointSetup s;
  s.datapath = DatapathKind::Ideal;
  s.budget.mem_bw_comm_gbps = 0;
  s.budget.sm_comm = 0;
  return s;
}

}  // namespace

TEST_CASE("submit_transfer: default intra link, one packet") {
  Channel ch;
  ch.eff_milli_bpc = milli_bytes_per_cycle(200.0, 0.94);
  ch.latency = 90;
  CHECK(ch.eff_milli_bpc == 151004);
  const auto t = submit_transfer(ch, 256, 1000);
  CHECK(t.start == 1000);
  CHECK(t.injected == 1002);  // ceil(256 / 151.004) = 2 cycles
  CHECK(t.arrival == 1092);   // + 90 cycles latency
  CHECK(ch.busy_until == 1002);
}

TEST_CASE("submit_transfer: bytes equal to capacity*efficiency take one cycle") {
  Channel ch;
  ch.eff_milli_bpc = 128000;  // 128 bytes/cycle exactly
  ch.latency = 10;
  const auto t = submit_transfer(ch, 128, 0);
  CHECK(t.injected == 1);
  CHECK(t.arrival == 11);
}

TEST_CASE("submit_transfer: back-to-back transfers serialize FIFO") {
  Channel ch;
  ch.eff_milli_bpc = 151004;
  ch.latency = 90;
  const auto a = submit_transfer(ch, 256, 0);
  const auto b = submit_transfer(ch, 256, 0);
  CHECK(a.start == 0);
  CHECK(b.start == a.injected);
  CHECK(b.injected == a.injected + 2);
  CHECK(ch.busy_until == b.injected);
  // latency pipelines: the channel is free before the first arrival
  CHECK(ch.busy_until < a.arrival + 2);
}

TEST_CASE("empty workload finishes at cycle zero") {
  const Topology t = build_torus(2, 1, 1, {});
  Simulator sim(t, ideal_setup());
  sim.run();
  CHECK(sim.now() == 0);
}

TEST_CASE("zero-byte collective completes at issue") {
  const Topology t = build_torus(2, 1, 1, {});
  Simulator sim(t, ideal_setup());
  const int id = sim.issue_collective(CollectiveKind::AllReduce, 0, "nil");
  CHECK(sim.collective_done(id));
  sim.run();
  CHECK(sim.collective_complete_time(id) == 0);
}

TEST_CASE("ring all-reduce k=4, one message group, ideal endpoint") {
  // 4x1x1 torus, payload = 4 segments of 1 KiB, message 1 KiB: the engine
  // runs 6 dependent rounds. Hand simulation: a round's send occupies
  // ceil(1024/151.004) = 7 cycles, arrives 90 later, the receiver turns it
  // around in 1 cycle; rounds chain, so each adds occ + latency + 1 = 98.
  TorusParams params;
  const Topology t = build_torus(4, 1, 1, params);
  EndpointSetup s = ideal_setup();
  s.chunk_bytes = 4096;
  s.message_bytes = 1024;
  Simulator sim(t, s);
  const int id = sim.issue_collective(CollectiveKind::AllReduce, 4096, "ar");
  sim.run();
  CHECK(sim.collective_complete_time(id) == 6 * (7 + 90 + 1));
}

TEST_CASE("single 256B transfer between neighbors: occupancy plus latency") {
  TorusParams params;
  const Topology t = build_torus(2, 1, 1, params);
  EndpointSetup s = ideal_setup();
  s.chunk_bytes = 256;
  s.message_bytes = 256;
  Simulator sim(t, s);
  // 2-node all-gather-free exchange: use an all-reduce of one 2x128B group
  const int id = sim.issue_collective(CollectiveKind::AllReduce, 256, "one");
  sim.run();
  // two rounds (reduce-scatter + gather) of 128B messages:
  // occ = ceil(128/151.004) = 1, +90 latency, +1 turnaround
  CHECK(sim.collective_complete_time(id) == 2 * (1 + 90 + 1));
}

TEST_CASE("per-link injected equals delivered after a run") {
  const Topology t = build_torus(2, 2, 2, {});
  EndpointSetup s = ideal_setup();
  Simulator sim(t, s);
  sim.issue_collective(CollectiveKind::AllReduce, 1 << 20, "c");
  sim.run();
  for (std::size_t i = 0; i < t.links().size(); i++) {
    CHECK(sim.stats().link_injected[i] == sim.stats().link_delivered[i]);
  }
}

TEST_CASE("per-link delivered bytes respect capacity over busy time") {
  const Topology t = build_torus(2, 2, 1, {});
  Simulator sim(t, ideal_setup());
  sim.issue_collective(CollectiveKind::AllReduce, 512 << 10, "c");
  sim.run();
  for (std::size_t i = 0; i < t.links().size(); i++) {
    const Bytes delivered = sim.stats().link_delivered[i];
    const Cycles busy = sim.stats().link_busy_cycles[i];
    CHECK(busy <= sim.now());
    // ceil rounding can only make transfers slower than the ideal rate
    const double cap = static_cast<double>(t.links()[i].cls.milli_bytes_per_cycle()) / 1000.0;
    CHECK(static_cast<double>(delivered) <= cap * static_cast<double>(busy) + 1.0);
  }
}

TEST_CASE("determinism: identical runs produce identical stats") {
  const Topology t = build_torus(2, 2, 2, {});
  EndpointSetup s;
  s.datapath = DatapathKind::Ace;
  auto run_once = [&] {
    Simulator sim(t, s);
    sim.issue_collective(CollectiveKind::AllReduce, 2 << 20, "a");
    sim.issue_collective(CollectiveKind::AllToAll, 1 << 20, "b");
    sim.run();
    return std::make_tuple(sim.now(), sim.stats().traffic.mem_bytes_read,
                           sim.stats().traffic.network_bytes_sent,
                           sim.stats().events_processed, sim.stats().sram_peak_bytes);
  };
  CHECK(run_once() == run_once());
}

TEST_CASE("engine byte counters equal the analytic traffic reports") {
  const Topology t = build_torus(2, 2, 2, {});
  const Bytes payload = 256 << 10;  // 4 chunks

  for (DatapathKind dp : {DatapathKind::Baseline, DatapathKind::Ace}) {
    EndpointSetup s;
    s.datapath = dp;
    s.budget.mem_bw_comm_gbps = 450;
    s.budget.sm_comm = 6;
    Simulator sim(t, s);
    const int id = sim.issue_collective(CollectiveKind::AllReduce, payload, "c");
    sim.run();
    CHECK(sim.collective_done(id));

    TrafficReport want;
    for (int chunk = 0; chunk < 4; chunk++) {
      const auto& sched = sim.schedule_for(CollectiveKind::AllReduce, 64 << 10, chunk % 2 == 1);
      want += dp == DatapathKind::Baseline ? baseline_traffic(sched) : ace_traffic(sched);
      // += keeps the max for sram peak; accumulate counters instead
    }
    // recompute sums explicitly (operator+= maxes the sram field only)
    TrafficReport total;
    for (int chunk = 0; chunk < 4; chunk++) {
      const auto& sched = sim.schedule_for(CollectiveKind::AllReduce, 64 << 10, chunk % 2 == 1);
      const TrafficReport r =
          dp == DatapathKind::Baseline ? baseline_traffic(sched) : ace_traffic(sched);
      total.mem_bytes_read += r.mem_bytes_read;
      total.mem_bytes_written += r.mem_bytes_written;
      total.bus_npu_afi_bytes += r.bus_npu_afi_bytes;
      total.bus_npu_mem_bytes += r.bus_npu_mem_bytes;
      total.network_bytes_sent += r.network_bytes_sent;
    }
    CHECK(sim.stats().traffic.mem_bytes_read == total.mem_bytes_read);
    CHECK(sim.stats().traffic.mem_bytes_written == total.mem_bytes_written);
    CHECK(sim.stats().traffic.bus_npu_afi_bytes == total.bus_npu_afi_bytes);
    CHECK(sim.stats().traffic.bus_npu_mem_bytes == total.bus_npu_mem_bytes);
    CHECK(sim.stats().traffic.network_bytes_sent == total.network_bytes_sent);
  }
}

TEST_CASE("ace sram occupancy stays within the configured size") {
  const Topology t = build_torus(4, 4, 4, {});
  EndpointSetup s;
  s.datapath = DatapathKind::Ace;
  Simulator sim(t, s);
  sim.issue_collective(CollectiveKind::AllReduce, 8 << 20, "c");
  sim.run();
  CHECK(sim.stats().sram_peak_bytes > 0);
  CHECK(sim.stats().sram_peak_bytes <= s.ace.sram_bytes);
}

TEST_CASE("ace reduction throughput respects the ALU width") {
  const Topology t = build_torus(2, 2, 2, {});
  EndpointSetup s;
  s.datapath = DatapathKind::Ace;
  Simulator sim(t, s);
  sim.issue_collective(CollectiveKind::AllReduce, 1 << 20, "c");
  sim.run();
  const Bytes reduced = sim.stats().reduced_bytes;
  const Cycles busy = sim.stats().alu_busy_cycles;
  CHECK(reduced > 0);
  // reduced bytes per busy cycle never beat alu_count * alu_width
  const Bytes bound = static_cast<Bytes>(s.ace.alu_count) * s.ace.alu_width_bytes;
  CHECK(reduced <= bound * busy + bound);
}

TEST_CASE("causality: no receive completes before its matching send is injected") {
  // indirectly: a 1-chunk run on a slow link takes at least occupancy+latency
  TorusParams params;
  params.intra.gbps = 1.0;  // 0.803 bytes/cycle
  const Topology t = build_torus(2, 1, 1, params);
  EndpointSetup s = ideal_setup();
  s.chunk_bytes = 1024;
  s.message_bytes = 512;
  Simulator sim(t, s);
  const int id = sim.issue_collective(CollectiveKind::AllReduce, 1024, "slow");
  sim.run();
  Channel ref;
  ref.eff_milli_bpc = milli_bytes_per_cycle(1.0, 0.94);
  CHECK(sim.collective_complete_time(id) >= ref.occupancy(512) + params.intra.latency);
}

TEST_CASE("sram too small for any message is rejected up front") {
  const Topology t = build_torus(4, 1, 1, {});
  EndpointSetup s;
  s.datapath = DatapathKind::Ace;
  s.ace.sram_bytes = 1024;  // absurdly small
  CHECK_THROWS_AS(Simulator(t, s), ConfigError);
}

TEST_CASE("stuck chunks raise a deadlock diagnostic listing blocked steps") {
  // the SRAM holds one message per phase (passes validation) but a phase's
  // whole working set never fits, so its space claim can never be granted
  const Topology t = build_torus(4, 4, 1, {});
  EndpointSetup s;
  s.datapath = DatapathKind::Ace;
  s.ace.sram_bytes = 256 << 10;
  Simulator sim(t, s);
  sim.issue_collective(CollectiveKind::AllReduce, 64 << 10, "stuck");
  try {
    sim.run();
    CHECK(false);
  } catch (const DeadlockError& e) {
    const std::string msg = e.what();
    CHECK(msg.find("blocked steps") != std::string::npos);
    CHECK(msg.find("phase gate closed") != std::string::npos);
  }
}
