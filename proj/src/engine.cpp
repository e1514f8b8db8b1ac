/******************************************************************************
This source code is licensed under the MIT license found in the
LICENSE file in the root directory of this source tree.
*******************************************************************************/

#include "collfab/engine.hpp"

#include <algorithm>
#include <cassert>
#include <sstream>

namespace collfab {

TransferTiming submit_transfer(Channel& ch, Bytes bytes, Cycles now) {
  assert(bytes > 0 && ch.eff_milli_bpc > 0);
  TransferTiming t;
  t.start = std::max(now, ch.busy_until);
  t.injected = t.start + ch.occupancy(bytes);
  t.arrival = t.injected + ch.latency;
  ch.busy_until = t.injected;
  ch.injected_bytes += bytes;
  return t;
}

namespace {

enum class EvKind : std::uint8_t { StepBegin, StageDone, Callback };

struct Event {
  Cycles t = 0;
  std::uint64_t seq = 0;
  EvKind kind = EvKind::Callback;
  std::uint32_t a = 0;  // run id / callback id
  std::uint32_t b = 0;  // step id
  std::uint32_t c = 0;  // stage index / payload
};

struct EventOrder {
  bool operator()(const Event& x, const Event& y) const {
    if (x.t != y.t) return x.t > y.t;
    return x.seq > y.seq;
  }
};

struct PlannedSchedule {
  CollectiveSchedule sched;
  std::vector<std::uint32_t> out_start;  // dependents CSR
  std::vector<std::uint32_t> out_edges;
  int phases = 0;
  std::vector<std::uint32_t> np_step_start;  // steps per node*phases+phase
  std::vector<std::uint32_t> np_steps;
  std::vector<std::uint32_t> np_counts;

  void build_index(int node_count) {
    const auto& steps = sched.steps;
    out_start.assign(steps.size() + 1, 0);
    for (std::uint32_t i = 0; i < steps.size(); i++) {
      for (std::uint32_t e = sched.dep_start[i]; e < sched.dep_start[i + 1]; e++) {
        out_start[sched.dep_edges[e] + 1]++;
      }
    }
    for (std::size_t i = 1; i < out_start.size(); i++) out_start[i] += out_start[i - 1];
    out_edges.assign(sched.dep_edges.size(), 0);
    std::vector<std::uint32_t> cursor(out_start.begin(), out_start.end() - 1);
    for (std::uint32_t i = 0; i < steps.size(); i++) {
      for (std::uint32_t e = sched.dep_start[i]; e < sched.dep_start[i + 1]; e++) {
        out_edges[cursor[sched.dep_edges[e]]++] = i;
      }
    }
    phases = std::max(1, sched.phase_count());
    const std::size_t buckets = static_cast<std::size_t>(node_count) * phases;
    np_counts.assign(buckets, 0);
    for (const auto& s : steps) {
      np_counts[static_cast<std::size_t>(s.node) * phases + s.phase]++;
    }
    np_step_start.assign(buckets + 1, 0);
    for (std::size_t i = 0; i < buckets; i++) np_step_start[i + 1] = np_step_start[i] + np_counts[i];
    np_steps.assign(steps.size(), 0);
    std::vector<std::uint32_t> cur(np_step_start.begin(), np_step_start.end() - 1);
    for (const auto& s : steps) {
      np_steps[cur[static_cast<std::size_t>(s.node) * phases + s.phase]++] = s.id;
    }
  }
};

struct ChunkRun {
  const PlannedSchedule* ps = nullptr;
  int coll = -1;
  std::uint32_t seq = 0;  // global instantiation order, drives FSM round-robin
  std::vector<Cycles> pair_arrival;     // wire arrival time per pair
  std::vector<std::uint32_t> pending;   // per step: open deps + 1 phase gate
  std::vector<std::uint32_t> np_left;   // per node-phase: steps not yet complete
  std::vector<std::uint8_t> gate_open;  // per node-phase
  std::vector<int> fsm_per_phase;
  std::vector<std::uint32_t> phase_nodes_left;  // nodes still executing each phase
  std::uint32_t dma_nodes_left = 0;
  std::uint32_t nodes_done = 0;
  std::uint32_t steps_done = 0;
  bool retired = false;
};

struct Collective {
  CollectiveKind kind = CollectiveKind::AllReduce;
  std::string name;
  Bytes payload = 0;
  std::uint32_t total_chunks = 0;
  std::uint32_t next_chunk = 0;
  std::uint32_t done_chunks = 0;
  Cycles issue_t = 0;
  Cycles complete_t = 0;
  bool done = false;
  std::vector<std::uint32_t> done_cbs;
};

// FIFO wait queue on a byte pool (one SRAM partition, per-node capacity).
struct SpacePool {
  Bytes free = 0;
  struct Waiter {
    Bytes bytes;
    std::uint32_t cb;
  };
  std::deque<Waiter> waiters;
};

}  // namespace

struct Simulator::Impl {
  Simulator* self;
  std::priority_queue<Event, std::vector<Event>, EventOrder> queue;
  std::uint64_t seq = 0;
  std::map<std::uint32_t, std::function<void()>> callbacks;
  std::uint32_t next_cb = 0;

  std::vector<Channel> links;
  struct NodeChannels {
    Channel mem_read, mem_write, bus_tx, bus_rx, alu, dma_read, dma_write;
  };
  std::vector<NodeChannels> nodes;

  std::vector<Collective> colls;
  std::vector<std::unique_ptr<ChunkRun>> runs;
  std::vector<int> lifo;  // pending collective ids, newest at back
  std::uint32_t in_flight = 0;
  std::uint32_t admit_cap = 0;  // 0 = unlimited
  std::uint32_t chunk_seq = 0;

  // ACE bookkeeping. Collectives are SPMD-symmetric, so every node's ACE
  // makes the same scheduling decisions; FSM queues and SRAM pools are
  // modeled once, globally, which also rules out cross-node head-of-line
  // deadlocks between per-node queues.
  std::vector<SramPartition> partitions;  // canonical layout
  std::vector<SpacePool> pools;           // one per partition (per-node view)
  std::vector<std::deque<std::pair<std::uint32_t, int>>> fsm_queues;  // fsm -> (run, phase)
  Bytes sram_occupied = 0;                // per-node occupancy

  std::map<std::uint64_t, std::unique_ptr<PlannedSchedule>> plan_cache;

  // per-link utilization windows
  std::vector<std::int64_t> link_last_window;
  std::vector<Cycles> link_busy_cycles;

  bool zero_capacity_endpoint = false;

  // ---- events ----------------------------------------------------------
  void push(Cycles t, EvKind kind, std::uint32_t a, std::uint32_t b = 0, std::uint32_t c = 0) {
    queue.push(Event{t, seq++, kind, a, b, c});
  }

  std::uint32_t add_callback(std::function<void()> fn) {
    const std::uint32_t id = next_cb++;
    callbacks.emplace(id, std::move(fn));
    return id;
  }

  void fire_callback(std::uint32_t id) {
    auto it = callbacks.find(id);
    assert(it != callbacks.end());
    auto fn = std::move(it->second);
    callbacks.erase(it);
    fn();
  }

  // ---- channel helpers ---------------------------------------------------
  TransferTiming submit_link(int link_id, Bytes bytes) {
    Channel& ch = links[link_id];
    const TransferTiming t = submit_transfer(ch, bytes, self->now_);
    mark_windows(link_id, t.start, t.injected);
    link_busy_cycles[link_id] += t.injected - t.start;
    return t;
  }

  Cycles submit_plain(Channel& ch, Bytes bytes) {
    return submit_transfer(ch, bytes, self->now_).arrival;
  }

  void mark_windows(int link_id, Cycles start, Cycles end) {
    const Cycles win = self->stats_.windows.window_cycles;
    const std::int64_t w0 = static_cast<std::int64_t>(start / win);
    const std::int64_t w1 = static_cast<std::int64_t>((end > start ? end - 1 : start) / win);
    auto& active = self->stats_.windows.active_links;
    if (static_cast<std::size_t>(w1 + 1) > active.size()) active.resize(w1 + 1, 0);
    for (std::int64_t w = std::max(w0, link_last_window[link_id] + 1); w <= w1; w++) {
      active[w]++;
    }
    link_last_window[link_id] = std::max(link_last_window[link_id], w1);
  }

  // ---- planning ----------------------------------------------------------
  const PlannedSchedule& plan(CollectiveKind kind, Bytes bytes, bool flip) {
    const std::uint64_t key =
        (bytes << 3) | (static_cast<std::uint64_t>(kind) << 1) | (flip ? 1 : 0);
    auto it = plan_cache.find(key);
    if (it != plan_cache.end()) return *it->second;
    auto ps = std::make_unique<PlannedSchedule>();
    switch (kind) {
      case CollectiveKind::AllReduce:
        ps->sched = plan_hierarchical_all_reduce(self->topo_, bytes, self->setup_.message_bytes,
                                                 flip);
        break;
      case CollectiveKind::AllToAll:
        ps->sched = plan_direct_all_to_all(self->topo_, bytes, self->setup_.message_bytes);
        break;
      default:
        throw ConfigError("engine runs all_reduce and all_to_all collectives only");
    }
    ps->sched.validate();
    ps->build_index(self->topo_.node_count());
    auto& ref = *ps;
    plan_cache.emplace(key, std::move(ps));
    return ref;
  }

  // ---- admission / LIFO ---------------------------------------------------
  void try_admit() {
    while (admit_cap == 0 || in_flight < admit_cap) {
      int coll_id = -1;
      while (!lifo.empty()) {
        const int cand = lifo.back();
        if (colls[cand].next_chunk < colls[cand].total_chunks) {
          coll_id = cand;
          break;
        }
        lifo.pop_back();
      }
      if (coll_id < 0) return;
      Collective& coll = colls[coll_id];
      const std::uint32_t idx = coll.next_chunk++;
      const Bytes full = self->setup_.chunk_bytes;
      const Bytes bytes = std::min<Bytes>(full, coll.payload - static_cast<Bytes>(idx) * full);
      instantiate_chunk(coll_id, coll.kind, bytes, idx);
    }
  }

  void instantiate_chunk(int coll_id, CollectiveKind kind, Bytes bytes, std::uint32_t chunk_idx) {
    const bool flip = kind == CollectiveKind::AllReduce && (chunk_idx % 2 == 1);
    const PlannedSchedule& ps = plan(kind, bytes, flip);
    auto run = std::make_unique<ChunkRun>();
    run->ps = &ps;
    run->coll = coll_id;
    run->seq = chunk_seq++;
    const std::uint32_t run_id = static_cast<std::uint32_t>(runs.size());
    in_flight++;

    const int n = self->topo_.node_count();
    const int phases = ps.phases;
    run->pending.resize(ps.sched.steps.size());
    for (std::uint32_t i = 0; i < ps.sched.steps.size(); i++) {
      run->pending[i] = ps.sched.dep_start[i + 1] - ps.sched.dep_start[i] + 1;  // +1 gate
    }
    run->pair_arrival.assign(ps.sched.pair_count, 0);
    run->np_left = ps.np_counts;
    run->gate_open.assign(static_cast<std::size_t>(n) * phases, 0);
    if (self->setup_.datapath == DatapathKind::Ace && ps.sched.phase_count() > 0) {
      run->fsm_per_phase.resize(phases);
      for (int p = 0; p < phases; p++) {
        run->fsm_per_phase[p] = assign_fsm(self->setup_.ace, ps.sched.plan.phases, p, run->seq);
      }
    }
    runs.push_back(std::move(run));

    if (ps.sched.steps.empty()) {
      // nothing to do anywhere (single node, degenerate dims)
      retire_run(run_id);
      return;
    }

    runs[run_id]->phase_nodes_left.assign(phases, static_cast<std::uint32_t>(n));
    if (self->setup_.datapath == DatapathKind::Ace) {
      start_ace_chunk(run_id);
    } else {
      for (int node = 0; node < n; node++) open_gate(run_id, node, 0);
    }
  }

  // ---- ACE chunk lifecycle ------------------------------------------------
  // Schedules with fewer phases than the canonical layout (e.g. all-to-all on
  // an all-reduce-shaped partition map) clamp into the available partitions;
  // the last phase always drains into the terminal partition.
  int part_for_input(int phase) const {
    return std::min<int>(phase, static_cast<int>(partitions.size()) - 2);
  }

  SpacePool& pool(int part) { return pools[part]; }

  void claim_space(int part, Bytes bytes, std::function<void()> cont) {
    SpacePool& p = pool(part);
    if (p.waiters.empty() && p.free >= bytes) {
      p.free -= bytes;
      sram_occupied += bytes;
      self->stats_.sram_peak_bytes = std::max(self->stats_.sram_peak_bytes, sram_occupied);
      cont();
      return;
    }
    p.waiters.push_back({bytes, add_callback(std::move(cont))});
  }

  void release_space(int part, Bytes bytes) {
    SpacePool& p = pool(part);
    p.free += bytes;
    assert(sram_occupied >= bytes);
    sram_occupied -= bytes;
    while (!p.waiters.empty() && p.free >= p.waiters.front().bytes) {
      const auto w = p.waiters.front();
      p.waiters.pop_front();
      p.free -= w.bytes;
      sram_occupied += w.bytes;
      self->stats_.sram_peak_bytes = std::max(self->stats_.sram_peak_bytes, sram_occupied);
      fire_callback(w.cb);
    }
  }

  void start_ace_chunk(std::uint32_t run_id) {
    ChunkRun& run = *runs[run_id];
    const auto& phases = run.ps->sched.plan.phases;
    assert(!phases.empty());
    const Bytes in_bytes = phases.front().input_bytes;
    const int n = self->topo_.node_count();
    run.dma_nodes_left = n;
    claim_space(part_for_input(0), in_bytes, [this, run_id, in_bytes, n] {
      // TX DMA on every node: memory -> bus -> ACE SRAM
      for (int node = 0; node < n; node++) {
        self->stats_.traffic.mem_bytes_read += in_bytes;
        self->stats_.traffic.bus_npu_mem_bytes += in_bytes;
        self->stats_.traffic.bus_npu_afi_bytes += in_bytes;
        auto& nc = nodes[node];
        const Cycles t1 = submit_plain(nc.dma_read, in_bytes);
        push(t1, EvKind::Callback, add_callback([this, run_id, node, in_bytes] {
               auto& nc2 = nodes[node];
               const Cycles t2 = submit_plain(nc2.bus_tx, in_bytes);
               push(t2, EvKind::Callback, add_callback([this, run_id] {
                      ChunkRun& r = *runs[run_id];
                      assert(r.dma_nodes_left > 0);
                      if (--r.dma_nodes_left == 0) enqueue_fsm(run_id, 0);
                    }));
             }));
      }
    });
  }

  void enqueue_fsm(std::uint32_t run_id, int phase) {
    ChunkRun& run = *runs[run_id];
    const int fsm = run.fsm_per_phase[phase];
    auto& q = fsm_queues[fsm];
    q.push_back({run_id, phase});
    if (q.size() == 1) process_fsm_head(fsm);
  }

  void process_fsm_head(int fsm) {
    auto& q = fsm_queues[fsm];
    if (q.empty()) return;
    const auto [run_id, phase] = q.front();
    ChunkRun& run = *runs[run_id];
    const auto& phases = run.ps->sched.plan.phases;
    const int last = run.ps->phases - 1;
    // Claim this phase's working partition (phase 0 already owns it from
    // admission), then the terminal slot when results drain to RX DMA, then
    // hand back the previous phase's slot and open the gate on every node.
    auto open = [this, run_id, phase] {
      if (phase > 0) {
        ChunkRun& r = *runs[run_id];
        release_space(part_for_input(phase - 1),
                      r.ps->sched.plan.phases[phase - 1].input_bytes);
      }
      for (int node = 0; node < self->topo_.node_count(); node++) {
        open_gate(run_id, node, phase);
      }
    };
    auto claim_terminal = [this, run_id, phase, last, &phases, open] {
      if (phase == last) {
        claim_space(static_cast<int>(partitions.size()) - 1, phases[phase].result_bytes, open);
      } else {
        open();
      }
    };
    if (phase > 0) {
      claim_space(part_for_input(phase), phases[phase].input_bytes, claim_terminal);
    } else {
      claim_terminal();
    }
  }

  void finish_fsm_head(std::uint32_t run_id, int phase) {
    ChunkRun& run = *runs[run_id];
    const int fsm = run.fsm_per_phase[phase];
    auto& q = fsm_queues[fsm];
    assert(!q.empty() && q.front().first == run_id && q.front().second == phase);
    q.pop_front();
    process_fsm_head(fsm);
  }

  // ---- phase gates ---------------------------------------------------------
  void open_gate(std::uint32_t run_id, int node, int phase) {
    ChunkRun& run = *runs[run_id];
    const int phases = run.ps->phases;
    auto& open = run.gate_open[static_cast<std::size_t>(node) * phases + phase];
    assert(!open);
    open = 1;
    const std::size_t bucket = static_cast<std::size_t>(node) * phases + phase;
    if (run.np_left[bucket] == 0) {
      // no steps for this node in this phase
      node_phase_done(run_id, node, phase);
      return;
    }
    for (std::uint32_t e = run.ps->np_step_start[bucket]; e < run.ps->np_step_start[bucket + 1];
         e++) {
      const std::uint32_t step = run.ps->np_steps[e];
      if (--run.pending[step] == 0) push(self->now_, EvKind::StepBegin, run_id, step);
    }
  }

  // ---- step pipelines -------------------------------------------------------
  void step_begin(std::uint32_t run_id, std::uint32_t step_id) {
    ChunkRun& run = *runs[run_id];
    const Step& s = run.ps->sched.steps[step_id];
    const DatapathKind dp = self->setup_.datapath;

    // byte counters, shared rule with the analytic report
    const StepMemOps ops = step_mem_ops(s, dp);
    if (dp != DatapathKind::Ideal) {
      self->stats_.traffic.mem_bytes_read += ops.read;
      self->stats_.traffic.mem_bytes_written += ops.write;
      self->stats_.traffic.bus_npu_mem_bytes += ops.read + ops.write;
    }
    if (s.kind == StepKind::SendMsg) {
      self->stats_.traffic.network_bytes_sent += s.bytes;
      if (dp == DatapathKind::Baseline) self->stats_.traffic.bus_npu_afi_bytes += s.bytes;
    }
    if (s.kind == StepKind::RecvMsg && dp == DatapathKind::Baseline) {
      self->stats_.traffic.bus_npu_afi_bytes += s.bytes;
    }
    if (s.kind == StepKind::ReduceLocal) self->stats_.reduced_bytes += s.bytes;

    advance_step(run_id, step_id, 0);
  }

  void advance_step(std::uint32_t run_id, std::uint32_t step_id, std::uint32_t stage) {
    ChunkRun& run = *runs[run_id];
    const Step& s = run.ps->sched.steps[step_id];
    const DatapathKind dp = self->setup_.datapath;
    auto& nc = nodes[s.node];

    auto next = [&](Cycles t, std::uint32_t next_stage) {
      push(t, EvKind::StageDone, run_id, step_id, next_stage);
    };
    auto done_at = [&](Cycles t) { push(t, EvKind::StageDone, run_id, step_id, 0xff); };

    if (stage == 0xff) {
      complete_step(run_id, step_id);
      return;
    }

    switch (s.kind) {
      case StepKind::SendMsg: {
        if (dp == DatapathKind::Baseline) {
          const Bytes reads = s.source != SendSource::ReducedData ? s.bytes : 0;
          if (stage == 0) {
            if (reads > 0) {
              next(submit_plain(nc.mem_read, reads), 1);
            } else {
              advance_step(run_id, step_id, 1);
            }
            return;
          }
          if (stage == 1) {
            next(submit_plain(nc.bus_tx, s.bytes), 2);
            return;
          }
          assert(s.link_id >= 0);
          const TransferTiming tt = submit_link(s.link_id, s.bytes);
          run.pair_arrival[s.pair] = tt.arrival;
          done_at(tt.injected);
          return;
        }
        // ACE and Ideal inject straight from SRAM / thin air
        assert(s.link_id >= 0);
        const TransferTiming tt = submit_link(s.link_id, s.bytes);
        run.pair_arrival[s.pair] = tt.arrival;
        done_at(tt.injected);
        return;
      }
      case StepKind::RecvMsg: {
        // stage 0 waits for the wire; endpoint work follows
        if (stage == 0) {
          const Cycles arrival = run.pair_arrival[s.pair];
          if (self->now_ < arrival) {
            next(arrival, 1);
            return;
          }
          advance_step(run_id, step_id, 1);
          return;
        }
        if (dp == DatapathKind::Baseline) {
          if (stage == 1) {
            next(submit_plain(nc.bus_rx, s.bytes), 2);
            return;
          }
          done_at(submit_plain(nc.mem_write, s.bytes));
          return;
        }
        if (dp == DatapathKind::Ideal) {
          done_at(self->now_ + 1);  // one-cycle turnaround
          return;
        }
        done_at(self->now_);  // ACE SRAM absorbs in place
        return;
      }
      case StepKind::ReduceLocal: {
        if (dp == DatapathKind::Baseline) {
          done_at(submit_plain(nc.mem_read, 2 * s.bytes));
          return;
        }
        if (dp == DatapathKind::Ace) {
          const Cycles t = submit_plain(nc.alu, s.bytes);
          self->stats_.alu_busy_cycles += nc.alu.occupancy(s.bytes);
          done_at(t);
          return;
        }
        done_at(self->now_);
        return;
      }
      case StepKind::StoreFinal: {
        if (dp == DatapathKind::Baseline && s.store_from_reduce) {
          done_at(submit_plain(nc.mem_write, s.bytes));
          return;
        }
        done_at(self->now_);
        return;
      }
      case StepKind::LoadFromMemory: {
        Channel& ch = dp == DatapathKind::Ace ? nc.dma_read : nc.mem_read;
        done_at(dp == DatapathKind::Ideal ? self->now_ : submit_plain(ch, s.bytes));
        return;
      }
      case StepKind::WriteToMemory: {
        Channel& ch = dp == DatapathKind::Ace ? nc.dma_write : nc.mem_write;
        done_at(dp == DatapathKind::Ideal ? self->now_ : submit_plain(ch, s.bytes));
        return;
      }
    }
  }

  void complete_step(std::uint32_t run_id, std::uint32_t step_id) {
    ChunkRun& run = *runs[run_id];
    run.steps_done++;
    {
      const Step& st = run.ps->sched.steps[step_id];
      if (st.kind == StepKind::SendMsg && st.link_id >= 0) {
        self->stats_.link_delivered[st.link_id] += st.bytes;
      }
    }
    for (std::uint32_t e = run.ps->out_start[step_id]; e < run.ps->out_start[step_id + 1]; e++) {
      const std::uint32_t d = run.ps->out_edges[e];
      assert(run.pending[d] > 0);
      if (--run.pending[d] == 0) push(self->now_, EvKind::StepBegin, run_id, d);
    }
    const Step& s = run.ps->sched.steps[step_id];
    const std::size_t bucket = static_cast<std::size_t>(s.node) * run.ps->phases + s.phase;
    assert(run.np_left[bucket] > 0);
    if (--run.np_left[bucket] == 0) node_phase_done(run_id, s.node, s.phase);
  }

  void node_phase_done(std::uint32_t run_id, int node, int phase) {
    ChunkRun& run = *runs[run_id];
    const bool ace = self->setup_.datapath == DatapathKind::Ace;
    const int last_phase = run.ps->phases - 1;
    if (!ace) {
      if (phase < last_phase) {
        open_gate(run_id, node, phase + 1);
      } else {
        node_done(run_id);
      }
      return;
    }
    assert(run.phase_nodes_left[phase] > 0);
    if (--run.phase_nodes_left[phase] > 0) return;
    // all nodes finished this phase
    finish_fsm_head(run_id, phase);
    if (phase < last_phase) {
      enqueue_fsm(run_id, phase + 1);
      return;
    }
    // RX DMA on every node: SRAM -> bus -> memory; afterwards the last
    // working partition and the terminal slot free up
    const Bytes out_bytes = run.ps->sched.plan.phases.back().result_bytes;
    const Bytes in_bytes = run.ps->sched.plan.phases.back().input_bytes;
    run.dma_nodes_left = static_cast<std::uint32_t>(self->topo_.node_count());
    for (int dn = 0; dn < self->topo_.node_count(); dn++) {
      self->stats_.traffic.mem_bytes_written += out_bytes;
      self->stats_.traffic.bus_npu_mem_bytes += out_bytes;
      self->stats_.traffic.bus_npu_afi_bytes += out_bytes;
      auto& nc = nodes[dn];
      const Cycles t1 = submit_plain(nc.bus_rx, out_bytes);
      push(t1, EvKind::Callback, add_callback([this, run_id, dn, out_bytes] {
             auto& nc2 = nodes[dn];
             const Cycles t2 = submit_plain(nc2.dma_write, out_bytes);
             push(t2, EvKind::Callback, add_callback([this, run_id, out_bytes] {
                    ChunkRun& r = *runs[run_id];
                    assert(r.dma_nodes_left > 0);
                    if (--r.dma_nodes_left == 0) {
                      const int last = r.ps->phases - 1;
                      const Bytes last_in = r.ps->sched.plan.phases.back().input_bytes;
                      release_space(part_for_input(last), last_in);
                      release_space(static_cast<int>(partitions.size()) - 1, out_bytes);
                      for (int k = 0; k < self->topo_.node_count(); k++) node_done(run_id);
                    }
                  }));
           }));
    }
  }

  void node_done(std::uint32_t run_id) {
    ChunkRun& run = *runs[run_id];
    run.nodes_done++;
    if (run.nodes_done == static_cast<std::uint32_t>(self->topo_.node_count())) {
      retire_run(run_id);
    }
  }

  void retire_run(std::uint32_t run_id) {
    ChunkRun& run = *runs[run_id];
    assert(!run.retired);
    run.retired = true;
    run.pending.clear();
    run.pending.shrink_to_fit();
    run.pair_arrival.clear();
    run.pair_arrival.shrink_to_fit();
    assert(in_flight > 0);
    in_flight--;
    Collective& coll = colls[run.coll];
    coll.done_chunks++;
    if (coll.done_chunks == coll.total_chunks) {
      coll.done = true;
      coll.complete_t = self->now_;
      for (auto cb : coll.done_cbs) fire_callback(cb);
      coll.done_cbs.clear();
    }
    try_admit();
  }

  // ---- diagnostics -----------------------------------------------------------
  std::string blocked_report() const {
    std::ostringstream out;
    int listed = 0;
    for (std::size_t r = 0; r < runs.size() && listed < 20; r++) {
      const ChunkRun& run = *runs[r];
      if (run.retired) continue;
      const auto& steps = run.ps->sched.steps;
      for (std::uint32_t i = 0; i < steps.size() && listed < 20; i++) {
        if (run.pending.empty() || run.pending[i] == 0) continue;
        const Step& s = steps[i];
        out << "  chunk " << r << " (" << colls[run.coll].name << ") step " << i << " node "
            << s.node << " phase " << s.phase << " waits on " << run.pending[i]
            << " prerequisite(s)";
        const std::size_t bucket = static_cast<std::size_t>(s.node) * run.ps->phases + s.phase;
        if (!run.gate_open[bucket]) out << " [phase gate closed]";
        out << "\n";
        listed++;
      }
    }
    return out.str();
  }

  bool all_done() const {
    for (const auto& run : runs) {
      if (!run->retired) return false;
    }
    for (const auto& c : colls) {
      if (!c.done) return false;
    }
    return true;
  }
};

Simulator::Simulator(const Topology& topo, const EndpointSetup& setup)
    : impl_(std::make_unique<Impl>()), topo_(topo), setup_(setup) {
  impl_->self = this;
  const int n = topo.node_count();

  for (const auto& link : topo.links()) {
    Channel ch;
    ch.eff_milli_bpc = link.cls.milli_bytes_per_cycle();
    ch.latency = link.cls.latency;
    ch.link_id = link.id;
    impl_->links.push_back(ch);
  }
  stats_.link_delivered.assign(topo.links().size(), 0);
  stats_.link_injected.assign(topo.links().size(), 0);
  impl_->link_last_window.assign(topo.links().size(), -1);
  impl_->link_busy_cycles.assign(topo.links().size(), 0);

  const ResourceBudget& b = setup.budget;
  Impl::NodeChannels nc;
  auto plain = [](double gbps) {
    Channel c;
    c.eff_milli_bpc = milli_bytes_per_cycle(gbps, 1.0);
    c.latency = 0;
    return c;
  };
  switch (setup.datapath) {
    case DatapathKind::Baseline: {
      const double eff = b.effective_comm_read_gbps();
      if (eff <= 0.0) {
        impl_->zero_capacity_endpoint = true;
      } else {
        nc.mem_read = plain(eff);
        nc.mem_write = plain(eff);
      }
      nc.bus_tx = plain(b.bus_npu_afi_gbps);
      nc.bus_rx = plain(b.bus_npu_afi_gbps);
      break;
    }
    case DatapathKind::Ace: {
      nc.dma_read = plain(setup.ace.dma_gbps);
      nc.dma_write = plain(setup.ace.dma_gbps);
      nc.bus_tx = plain(b.bus_npu_afi_gbps);
      nc.bus_rx = plain(b.bus_npu_afi_gbps);
      nc.alu = plain(gbps_from_bytes_per_cycle(
          static_cast<double>(setup.ace.alu_count) * static_cast<double>(setup.ace.alu_width_bytes)));
      break;
    }
    case DatapathKind::Ideal:
      break;
  }
  impl_->nodes.assign(n, nc);

  impl_->admit_cap = 0;
  if (setup.datapath == DatapathKind::Ace) {
    impl_->admit_cap = static_cast<std::uint32_t>(setup.ace.fsm_count);
  } else if (setup.budget.in_flight_chunks > 0) {
    impl_->admit_cap = static_cast<std::uint32_t>(setup.budget.in_flight_chunks);
  } else if (setup.budget.in_flight_chunks < 0) {
    impl_->admit_cap = 16;  // datapath-neutral default window
  }

  if (setup.datapath == DatapathKind::Ace) {
    // canonical partition layout from the workload's main collective shape
    const auto canonical = plan_hierarchical_all_reduce(topo, setup.chunk_bytes,
                                                        setup.message_bytes, false);
    if (!canonical.plan.phases.empty()) {
      impl_->partitions = partition_sram(setup.ace, canonical.plan.phases);
    } else {
      impl_->partitions = {SramPartition{0, setup.ace.sram_bytes / 2},
                           SramPartition{setup.ace.sram_bytes / 2, setup.ace.sram_bytes / 2}};
    }
    impl_->pools.resize(impl_->partitions.size());
    for (std::size_t p = 0; p < impl_->partitions.size(); p++) {
      impl_->pools[p].free = impl_->partitions[p].bytes;
    }
    impl_->fsm_queues.resize(setup.ace.fsm_count);
  }
}

Simulator::~Simulator() = default;

void Simulator::at(Cycles t, std::function<void()> fn) {
  assert(t >= now_);
  impl_->push(t, EvKind::Callback, impl_->add_callback(std::move(fn)));
}

int Simulator::issue_collective(CollectiveKind kind, Bytes payload, std::string name) {
  if (impl_->zero_capacity_endpoint && payload > 0 && topo_.node_count() > 1) {
    throw ConfigError("endpoint has zero communication capacity (no SMs or no memory BW)");
  }
  Collective coll;
  coll.kind = kind;
  coll.name = std::move(name);
  coll.payload = payload;
  coll.issue_t = now_;
  coll.total_chunks =
      payload == 0 ? 0 : static_cast<std::uint32_t>(ceil_div(payload, setup_.chunk_bytes));
  const int id = static_cast<int>(impl_->colls.size());
  if (coll.total_chunks == 0) {
    coll.done = true;
    coll.complete_t = now_;
    impl_->colls.push_back(std::move(coll));
    return id;
  }
  impl_->colls.push_back(std::move(coll));
  impl_->lifo.push_back(id);
  impl_->try_admit();
  return id;
}

bool Simulator::collective_done(int id) const { return impl_->colls[id].done; }
Cycles Simulator::collective_issue_time(int id) const { return impl_->colls[id].issue_t; }
Cycles Simulator::collective_complete_time(int id) const { return impl_->colls[id].complete_t; }

void Simulator::on_collective_done(int id, std::function<void()> fn) {
  Collective& coll = impl_->colls[id];
  if (coll.done) {
    fn();
    return;
  }
  coll.done_cbs.push_back(impl_->add_callback(std::move(fn)));
}

void Simulator::run() {
  auto& q = impl_->queue;
  while (!q.empty()) {
    const Event ev = q.top();
    q.pop();
    assert(ev.t >= now_);
    now_ = ev.t;
    stats_.events_processed++;
    switch (ev.kind) {
      case EvKind::StepBegin:
        impl_->step_begin(ev.a, ev.b);
        break;
      case EvKind::StageDone:
        impl_->advance_step(ev.a, ev.b, ev.c);
        break;
      case EvKind::Callback:
        impl_->fire_callback(ev.a);
        break;
    }
  }
  if (!impl_->all_done()) {
    throw DeadlockError("simulation stalled with blocked steps:\n" + impl_->blocked_report());
  }
  log_msg(LogLevel::Debug, "run drained after " + std::to_string(stats_.events_processed) +
                               " events at cycle " + std::to_string(now_));
  stats_.link_busy_cycles = impl_->link_busy_cycles;
  for (std::size_t i = 0; i < impl_->links.size(); i++) {
    stats_.link_injected[i] = impl_->links[i].injected_bytes;
  }
  stats_.traffic.sram_bytes_peak = stats_.sram_peak_bytes;
}

const CollectiveSchedule& Simulator::schedule_for(CollectiveKind kind, Bytes bytes, bool flip) {
  return impl_->plan(kind, bytes, flip).sched;
}

}  // namespace collfab
