/******************************************************************************
This source code is licensed under the MIT license found in the
LICENSE file in the root directory of this source tree.
*******************************************************************************/

#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cstdio>
#include <fstream>

#include "collfab/workload.hpp"

using namespace collfab;

namespace {

SystemConfig sys_of(SystemKind kind) {
  ResourceBudget base;
  base.mem_bw_comm_gbps = -1.0;
  base.sm_comm = -1;
  AceConfig ace;
  return make_system_config(kind, base, ace, 64 << 10, 8 << 10);
}

Workload tiny_trace(int layers, Bytes ar_bytes) {
  Workload w;
  w.model = "tiny";
  w.parallelism = "data";
  w.minibatch = 1;
  for (int i = 0; i < layers; i++) {
    Layer l;
    l.name = "l" + std::to_string(i);
    l.fwd_cycles = 2000;
    l.ig_cycles = 2500;
    l.wg_cycles = 2500;
    l.comm_kind = CollectiveKind::AllReduce;
    l.trigger = ar_bytes > 0 ? CommTrigger::AfterWeightGrad : CommTrigger::None;
    l.comm_bytes = ar_bytes;
    w.layers.push_back(l);
  }
  return w;
}

}  // namespace

TEST_CASE("bundled traces have the documented shapes") {
  const Workload rn = bundled_trace("resnet50");
  CHECK(rn.parallelism == "data");
  CHECK(rn.minibatch == 32);
  CHECK(rn.embedding_layer() == -1);
  for (const auto& l : rn.layers) {
    CHECK(l.comm_kind == CollectiveKind::AllReduce);
    CHECK(l.trigger == CommTrigger::AfterWeightGrad);
    CHECK(l.comm_bytes > 0);
  }

  const Workload gn = bundled_trace("gnmt");
  CHECK(gn.layers.size() < rn.layers.size());
  Bytes rn_avg = 0, gn_avg = 0;
  for (const auto& l : rn.layers) rn_avg += l.comm_bytes;
  for (const auto& l : gn.layers) gn_avg += l.comm_bytes;
  rn_avg /= rn.layers.size();
  gn_avg /= gn.layers.size();
  CHECK(gn_avg > rn_avg);  // fewer, larger collectives

  const Workload dl = bundled_trace("dlrm");
  CHECK(dl.parallelism == "hybrid");
  CHECK(dl.minibatch == 512);
  // exactly one embedding all-to-all layer, placed before the top MLP
  int emb_count = 0;
  for (const auto& l : dl.layers) {
    if (l.trigger == CommTrigger::FwdEmbedding) {
      emb_count++;
      CHECK(l.comm_kind == CollectiveKind::AllToAll);
    }
  }
  CHECK(emb_count == 1);
  const int emb = dl.embedding_layer();
  CHECK(emb > 0);
  CHECK(emb < static_cast<int>(dl.layers.size()) - 1);
  CHECK(dl.layers[static_cast<std::size_t>(emb) + 1].name.rfind("top", 0) == 0);

  CHECK_THROWS_AS(bundled_trace("alexnet"), ConfigError);
}

TEST_CASE("trace files round-trip and report schema violations with line numbers") {
  const Workload dl = bundled_trace("dlrm");
  const std::string path = "/tmp/collfab_trace_test.jsonl";
  save_trace(dl, path);
  const Workload back = load_trace(path);
  CHECK(back.model == dl.model);
  CHECK(back.minibatch == dl.minibatch);
  REQUIRE(back.layers.size() == dl.layers.size());
  for (std::size_t i = 0; i < dl.layers.size(); i++) {
    CHECK(back.layers[i].name == dl.layers[i].name);
    CHECK(back.layers[i].fwd_cycles == dl.layers[i].fwd_cycles);
    CHECK(back.layers[i].comm_bytes == dl.layers[i].comm_bytes);
    CHECK(back.layers[i].trigger == dl.layers[i].trigger);
  }
  std::remove(path.c_str());

  {
    std::ofstream bad("/tmp/collfab_bad_trace.jsonl");
    bad << R"({"model":"x","parallelism":"data","minibatch":1})" << "\n";
    bad << R"({"name":"l0","fwd_cycles":1})" << "\n";  // missing fields
  }
  try {
    load_trace("/tmp/collfab_bad_trace.jsonl");
    CHECK(false);
  } catch (const ConfigError& e) {
    CHECK(std::string(e.what()).find("line 2") != std::string::npos);
  }
  std::remove("/tmp/collfab_bad_trace.jsonl");
}

TEST_CASE("system presets match the target system table") {
  const auto comm = sys_of(SystemKind::BaselineCommOpt);
  CHECK(comm.setup.datapath == DatapathKind::Baseline);
  CHECK(comm.setup.budget.mem_bw_comm_gbps == 450.0);
  CHECK(comm.setup.budget.sm_comm == 6);
  CHECK(compute_slowdown_factor(comm.compute_budget) == doctest::Approx(2.0));

  const auto comp = sys_of(SystemKind::BaselineCompOpt);
  CHECK(comp.setup.budget.mem_bw_comm_gbps == 128.0);
  CHECK(comp.setup.budget.sm_comm == 2);

  const auto ace = sys_of(SystemKind::Ace);
  CHECK(ace.setup.datapath == DatapathKind::Ace);
  CHECK(ace.setup.ace.dma_gbps == 128.0);
  CHECK(ace.setup.budget.sm_comm == 0);

  const auto noov = sys_of(SystemKind::BaselineNoOverlap);
  CHECK(noov.setup.budget.mem_bw_comm_gbps == noov.setup.budget.mem_bw_gbps);
  CHECK(compute_slowdown_factor(noov.compute_budget) == doctest::Approx(1.0));

  const auto ideal = sys_of(SystemKind::Ideal);
  CHECK(ideal.setup.datapath == DatapathKind::Ideal);
  CHECK(compute_slowdown_factor(ideal.compute_budget) == doctest::Approx(1.0));
}

TEST_CASE("zero communication means zero exposed time and pure compute") {
  const Topology t = build_torus(2, 2, 1, {});
  const Workload w = tiny_trace(4, 0);
  const auto m = run_training(w, sys_of(SystemKind::Ideal), t);
  CHECK(m.exposed_comm_cycles == 0);
  CHECK(m.total_compute_cycles == 2 * w.iteration_compute_cycles());
  CHECK(m.iteration_cycles == m.total_compute_cycles);
}

TEST_CASE("empty trace runs for zero cycles") {
  const Topology t = build_torus(2, 1, 1, {});
  Workload w;
  w.model = "empty";
  w.parallelism = "data";
  const auto m = run_training(w, sys_of(SystemKind::Ideal), t);
  CHECK(m.iteration_cycles == 0);
}

TEST_CASE("accounting identity holds for every config") {
  const Topology t = build_torus(2, 2, 2, {});
  const Workload w = tiny_trace(6, 256 << 10);
  for (SystemKind k : {SystemKind::BaselineNoOverlap, SystemKind::BaselineCommOpt,
                       SystemKind::BaselineCompOpt, SystemKind::Ace, SystemKind::Ideal}) {
    const auto m = run_training(w, sys_of(k), t);
    CHECK(m.iteration_cycles == m.total_compute_cycles + m.exposed_comm_cycles);
    CHECK(m.iteration_cycles > 0);
  }
}

TEST_CASE("exposed time never exceeds total communication busy time") {
  const Topology t = build_torus(2, 2, 2, {});
  const Workload w = bundled_trace("gnmt");
  for (SystemKind k : {SystemKind::Ace, SystemKind::BaselineCompOpt}) {
    const auto m = run_training(w, sys_of(k), t);
    Cycles comm_busy = 0;
    for (const auto& c : m.collectives) comm_busy += c.complete - c.issue;
    CHECK(m.exposed_comm_cycles <= comm_busy);
  }
}

TEST_CASE("no-overlap exposes the entire fused collective latency") {
  const Topology t = build_torus(2, 2, 1, {});
  const Workload w = tiny_trace(3, 512 << 10);
  const auto m = run_training(w, sys_of(SystemKind::BaselineNoOverlap), t);
  // compute is unscaled, everything else is exposed communication
  CHECK(m.total_compute_cycles == 2 * w.iteration_compute_cycles());
  CHECK(m.exposed_comm_cycles > 0);
  // both fused collectives appear
  int fused = 0;
  for (const auto& c : m.collectives) {
    if (c.name.find("fused") != std::string::npos) fused++;
  }
  CHECK(fused == 2);
}

TEST_CASE("lifo scheduling: later-issued collectives preempt at chunk granularity") {
  const Topology t = build_torus(2, 1, 1, {});
  EndpointSetup s;
  s.datapath = DatapathKind::Ideal;
  s.budget.in_flight_chunks = 1;  // one chunk slot makes the order visible
  Simulator sim(t, s);
  // A gets one chunk into the slot; B and C queue. Service order: C then B.
  const int a = sim.issue_collective(CollectiveKind::AllReduce, 256 << 10, "A");
  const int b = sim.issue_collective(CollectiveKind::AllReduce, 256 << 10, "B");
  const int c = sim.issue_collective(CollectiveKind::AllReduce, 256 << 10, "C");
  sim.run();
  CHECK(sim.collective_complete_time(c) < sim.collective_complete_time(b));
  CHECK(sim.collective_complete_time(b) < sim.collective_complete_time(a));
}

TEST_CASE("lifo scheduling: a new collective takes the next free slot mid-flight") {
  const Topology t = build_torus(2, 1, 1, {});
  EndpointSetup s;
  s.datapath = DatapathKind::Ideal;
  s.budget.in_flight_chunks = 1;
  Simulator sim(t, s);
  const int a = sim.issue_collective(CollectiveKind::AllReduce, 16 << 20, "A");
  int b = -1;
  // after A is partially done, B arrives and must finish before A
  sim.at(40000, [&] { b = sim.issue_collective(CollectiveKind::AllReduce, 128 << 10, "B"); });
  sim.run();
  REQUIRE(b >= 0);
  CHECK(sim.collective_complete_time(b) < sim.collective_complete_time(a));
}

TEST_CASE("single pending collective: lifo equals fifo") {
  const Topology t = build_torus(2, 1, 1, {});
  EndpointSetup s;
  s.datapath = DatapathKind::Ideal;
  Simulator sim(t, s);
  const int a = sim.issue_collective(CollectiveKind::AllReduce, 128 << 10, "A");
  sim.run();
  CHECK(sim.collective_done(a));
}

TEST_CASE("iteration ordering: ideal <= ace <= baselines on the bundled traces") {
  const Topology t = build_torus(2, 2, 2, {});
  const Workload w = bundled_trace("resnet50");
  const auto ideal = run_training(w, sys_of(SystemKind::Ideal), t);
  const auto ace = run_training(w, sys_of(SystemKind::Ace), t);
  const auto noov = run_training(w, sys_of(SystemKind::BaselineNoOverlap), t);
  CHECK(ideal.iteration_cycles <= ace.iteration_cycles);
  CHECK(ace.iteration_cycles <= noov.iteration_cycles);
}

TEST_CASE("dlrm optimized loop: zero embedding cost means identical timing") {
  const Topology t = build_torus(2, 2, 1, {});
  Workload w = bundled_trace("dlrm");
  Layer& emb = w.layers[w.embedding_layer()];
  emb.fwd_cycles = 0;
  emb.wg_cycles = 0;
  emb.comm_bytes = 0;
  const auto def = run_training(w, sys_of(SystemKind::Ace), t);
  const auto opt = run_dlrm_optimized(w, sys_of(SystemKind::Ace), t);
  CHECK(def.iteration_cycles == opt.iteration_cycles);
  CHECK(def.exposed_comm_cycles == opt.exposed_comm_cycles);
}

TEST_CASE("dlrm optimized loop requires an embedding layer") {
  const Topology t = build_torus(2, 1, 1, {});
  const Workload w = tiny_trace(2, 1024);
  CHECK_THROWS_AS(run_dlrm_optimized(w, sys_of(SystemKind::Ace), t), ConfigError);
}

TEST_CASE("two iterations leave a zero-utilization gap between network bursts") {
  const Topology t = build_torus(2, 2, 2, {});
  const Workload w = bundled_trace("resnet50");
  const auto m = run_training(w, sys_of(SystemKind::Ideal), t);
  REQUIRE(!m.utilization.empty());
  // find the largest internal zero-gap; activity must exist on both sides
  std::size_t first_active = m.utilization.size(), last_active = 0;
  for (std::size_t i = 0; i < m.utilization.size(); i++) {
    if (m.utilization[i] > 0) {
      first_active = std::min(first_active, i);
      last_active = i;
    }
  }
  REQUIRE(first_active < last_active);
  std::size_t best_len = 0, best_mid = 0;
  std::size_t run_start = 0;
  bool in_zero = false;
  for (std::size_t i = first_active; i <= last_active; i++) {
    if (m.utilization[i] == 0 && !in_zero) {
      in_zero = true;
      run_start = i;
    } else if (m.utilization[i] > 0 && in_zero) {
      in_zero = false;
      if (i - run_start > best_len) {
        best_len = i - run_start;
        best_mid = run_start + (i - run_start) / 2;
      }
    }
  }
  CHECK(best_len >= 1);  // a real gap separates the two iteration bursts
  bool before = false, after = false;
  for (std::size_t i = first_active; i < best_mid; i++) before |= m.utilization[i] > 0;
  for (std::size_t i = best_mid; i <= last_active; i++) after |= m.utilization[i] > 0;
  CHECK(before);
  CHECK(after);
}

TEST_CASE("microbenchmark metrics: iteration equals exposed, compute zero") {
  const Topology t = build_torus(2, 2, 1, {});
  const auto m = run_microbenchmark(CollectiveKind::AllReduce, 1 << 20,
                                    sys_of(SystemKind::Ideal), t);
  CHECK(m.total_compute_cycles == 0);
  CHECK(m.iteration_cycles == m.exposed_comm_cycles);
  CHECK(m.effective_network_gbps > 0.0);
  CHECK(m.network_bytes_delivered > 0);
}
