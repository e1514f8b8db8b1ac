/******************************************************************************
This source code is licensed under the MIT license found in the
LICENSE file in the root directory of this source tree.
*******************************************************************************/

#include "collfab/workload.hpp"

#include <algorithm>
#include <cassert>
#include <deque>

namespace collfab {

const char* to_string(SystemKind k) {
  switch (k) {
    case SystemKind::BaselineNoOverlap:
      return "baseline_no_overlap";
    case SystemKind::BaselineCommOpt:
      return "baseline_comm_opt";
    case SystemKind::BaselineCompOpt:
      return "baseline_comp_opt";
    case SystemKind::Ace:
      return "ace";
    case SystemKind::Ideal:
      return "ideal";
  }
  return "?";
}

SystemKind system_kind_from(const std::string& name) {
  for (SystemKind k : {SystemKind::BaselineNoOverlap, SystemKind::BaselineCommOpt,
                       SystemKind::BaselineCompOpt, SystemKind::Ace, SystemKind::Ideal}) {
    if (name == to_string(k)) return k;
  }
  throw ConfigError("unknown system_config '" + name + "'");
}

SystemConfig make_system_config(SystemKind kind, const ResourceBudget& base, const AceConfig& ace,
                                Bytes chunk_bytes, Bytes message_bytes) {
  SystemConfig sc;
  sc.kind = kind;
  sc.setup.chunk_bytes = chunk_bytes;
  sc.setup.message_bytes = message_bytes;
  sc.setup.ace = ace;

  ResourceBudget b = base;
  const bool bw_override = base.mem_bw_comm_gbps >= 0.0;
  const bool sm_override = base.sm_comm >= 0;

  switch (kind) {
    case SystemKind::BaselineNoOverlap:
      // full resources for whichever side is running; communication is
      // serialized behind back-propagation
      sc.setup.datapath = DatapathKind::Baseline;
      b.mem_bw_comm_gbps = b.mem_bw_gbps;
      b.sm_comm = b.sm_total;
      if (b.in_flight_chunks < 0) b.in_flight_chunks = 24;
      sc.setup.budget = b;
      sc.compute_budget = base;
      sc.compute_budget.mem_bw_comm_gbps = 0.0;
      sc.compute_budget.sm_comm = 0;
      return sc;
    case SystemKind::BaselineCommOpt:
      sc.setup.datapath = DatapathKind::Baseline;
      b.mem_bw_comm_gbps = bw_override ? base.mem_bw_comm_gbps : 450.0;
      b.sm_comm = sm_override ? base.sm_comm : 6;
      if (b.in_flight_chunks < 0) b.in_flight_chunks = 24;
      sc.setup.budget = b;
      sc.compute_budget = b;
      return sc;
    case SystemKind::BaselineCompOpt:
      sc.setup.datapath = DatapathKind::Baseline;
      b.mem_bw_comm_gbps = bw_override ? base.mem_bw_comm_gbps : 128.0;
      b.sm_comm = sm_override ? base.sm_comm : 2;
      if (b.in_flight_chunks < 0) b.in_flight_chunks = 24;
      sc.setup.budget = b;
      sc.compute_budget = b;
      return sc;
    case SystemKind::Ace:
      sc.setup.datapath = DatapathKind::Ace;
      sc.setup.ace.dma_gbps = bw_override ? base.mem_bw_comm_gbps : ace.dma_gbps;
      b.mem_bw_comm_gbps = sc.setup.ace.dma_gbps;
      b.sm_comm = 0;
      sc.setup.budget = b;
      sc.compute_budget = b;
      return sc;
    case SystemKind::Ideal:
      sc.setup.datapath = DatapathKind::Ideal;
      b.mem_bw_comm_gbps = 0.0;
      b.sm_comm = 0;
      sc.setup.budget = b;
      sc.compute_budget = b;
      return sc;
  }
  throw ConfigError("bad system kind");
}

namespace {

struct Action {
  enum class K : std::uint8_t { Compute, Issue, Wait, StartBgLookup, JoinBg, End };
  K k = K::End;
  Cycles cycles = 0;         // Compute
  int slot = -1;             // Issue/Wait: collective slot
  CollectiveKind kind = CollectiveKind::AllReduce;
  Bytes bytes = 0;
  std::string name;
};

class LoopRunner {
 public:
  LoopRunner(const Workload& w, const SystemConfig& sys, const Topology& topo, bool optimized)
      : w_(w), sys_(sys), sim_(topo, sys.setup), optimized_(optimized) {
    compute_slowdown_factor(sys.compute_budget);  // validates the split early
    const double avail = sys.compute_budget.mem_bw_gbps - sys.compute_budget.mem_bw_comm_gbps;
    bg_factor_ = std::max(1.0, avail / 80.0);
    build_actions();
  }

  RunMetrics run() {
    if (!actions_.empty()) step();
    sim_.run();
    assert(pc_ == actions_.size());
    RunMetrics m;
    m.iteration_cycles = end_time_;
    m.total_compute_cycles = compute_total_;
    m.exposed_comm_cycles = exposed_total_;
    m.traffic = sim_.stats().traffic;
    m.window_cycles = sim_.stats().windows.window_cycles;
    const double links = static_cast<double>(sim_.topology().links().size());
    for (auto c : sim_.stats().windows.active_links) {
      m.utilization.push_back(links > 0 ? static_cast<double>(c) / links : 0.0);
    }
    for (std::size_t i = 0; i < coll_ids_.size(); i++) {
      if (coll_ids_[i] < 0) continue;
      m.collectives.push_back({coll_names_[i], sim_.collective_issue_time(coll_ids_[i]),
                               sim_.collective_complete_time(coll_ids_[i])});
    }
    for (Bytes d : sim_.stats().link_delivered) m.network_bytes_delivered += d;
    if (m.iteration_cycles > 0 && sim_.topology().node_count() > 0) {
      m.effective_network_gbps = gbps_from_bytes_per_cycle(
          static_cast<double>(m.network_bytes_delivered) /
          static_cast<double>(m.iteration_cycles) / sim_.topology().node_count());
    }
    m.events = sim_.stats().events_processed;
    return m;
  }

 private:
  int new_slot(const std::string& name) {
    coll_ids_.push_back(-1);
    coll_names_.push_back(name);
    return static_cast<int>(coll_ids_.size()) - 1;
  }

  void emit_compute(Cycles c) {
    if (c == 0) return;
    Action a;
    a.k = Action::K::Compute;
    a.cycles = c;
    actions_.push_back(std::move(a));
  }
  void emit_issue(int slot, CollectiveKind kind, Bytes bytes) {
    Action a;
    a.k = Action::K::Issue;
    a.slot = slot;
    a.kind = kind;
    a.bytes = bytes;
    actions_.push_back(std::move(a));
  }
  void emit_wait(int slot) {
    Action a;
    a.k = Action::K::Wait;
    a.slot = slot;
    actions_.push_back(std::move(a));
  }
  void emit(Action::K k) {
    Action a;
    a.k = k;
    actions_.push_back(std::move(a));
  }

  void build_actions() {
    const int emb = w_.embedding_layer();
    const int n_layers = static_cast<int>(w_.layers.size());
    const bool no_overlap = sys_.kind == SystemKind::BaselineNoOverlap;
    if (optimized_ && emb < 0) {
      throw ConfigError("optimized training loop requires a dlrm-like trace (fwd_embedding)");
    }

    std::vector<std::vector<int>> ar_slot(2, std::vector<int>(n_layers, -1));
    a2a_fwd_slot_ = {-1, -1};
    std::array<int, 2> a2a_bwd_slot{-1, -1};
    std::array<int, 2> fused_slot{-1, -1};

    for (int iter = 0; iter < 2; iter++) {
      const std::string it = "i" + std::to_string(iter) + ".";
      // ---- forward pass ----
      if (emb >= 0) {
        const Layer& e = w_.layers[emb];
        a2a_fwd_slot_[iter] = new_slot(it + e.name + ".a2a_fwd");
        if (!(optimized_ && iter == 1)) {
          // embedding lookup, then exchange; in the optimized loop iteration
          // 1's lookup already ran on the background track
          emit_compute(e.fwd_cycles);
          emit_issue(a2a_fwd_slot_[iter], CollectiveKind::AllToAll, e.comm_bytes);
        }
      }
      for (int li = 0; li < n_layers; li++) {
        const Layer& l = w_.layers[li];
        if (li == emb) {
          // interaction point: top MLP needs the embedding exchange
          emit_wait(a2a_fwd_slot_[iter]);
          if (optimized_ && iter == 0) emit(Action::K::StartBgLookup);
          continue;
        }
        if (iter > 0 && !no_overlap && l.comm_bytes > 0 &&
            l.trigger == CommTrigger::AfterWeightGrad) {
          emit_wait(ar_slot[iter - 1][li]);
        }
        emit_compute(l.fwd_cycles);
      }
      // ---- back-propagation ----
      Bytes fused_bytes = 0;
      for (int li = n_layers - 1; li >= 0; li--) {
        const Layer& l = w_.layers[li];
        if (li == emb) continue;  // embedding update handled at the end
        emit_compute(l.ig_cycles + l.wg_cycles);
        if (l.comm_bytes > 0 && l.trigger == CommTrigger::AfterWeightGrad) {
          if (no_overlap) {
            fused_bytes += l.comm_bytes;
          } else {
            ar_slot[iter][li] = new_slot(it + l.name + ".ar");
            emit_issue(ar_slot[iter][li], CollectiveKind::AllReduce, l.comm_bytes);
          }
        }
      }
      if (no_overlap) {
        fused_slot[iter] = new_slot(it + "fused.ar");
        emit_issue(fused_slot[iter], CollectiveKind::AllReduce, fused_bytes);
        if (emb >= 0) {
          a2a_bwd_slot[iter] = new_slot(it + "embedding.a2a_bwd");
          emit_issue(a2a_bwd_slot[iter], CollectiveKind::AllToAll, w_.layers[emb].comm_bytes);
        }
        emit_wait(fused_slot[iter]);
        if (emb >= 0) {
          emit_wait(a2a_bwd_slot[iter]);
          emit_compute(w_.layers[emb].wg_cycles);
        }
      } else if (emb >= 0) {
        a2a_bwd_slot[iter] = new_slot(it + "embedding.a2a_bwd");
        emit_issue(a2a_bwd_slot[iter], CollectiveKind::AllToAll, w_.layers[emb].comm_bytes);
        if (optimized_ && iter == 0) {
          // update runs on the background track once the exchange lands
          bg_update_after_slot_ = a2a_bwd_slot[iter];
        } else {
          emit_wait(a2a_bwd_slot[iter]);
          emit_compute(w_.layers[emb].wg_cycles);
        }
      }
    }
    // drain every outstanding collective; tail blocking is exposed time
    for (std::size_t slot = 0; slot < coll_ids_.size(); slot++) {
      emit_wait(static_cast<int>(slot));
    }
    if (optimized_) emit(Action::K::JoinBg);
    emit(Action::K::End);
  }

  // ---- background embedding track ----
  void bg_enqueue(Cycles base_cycles, std::function<void()> done_hook) {
    bg_jobs_.push_back({base_cycles, std::move(done_hook)});
    if (!bg_busy_) bg_start_next();
  }

  void bg_start_next() {
    if (bg_jobs_.empty()) {
      bg_busy_ = false;
      if (bg_join_waiting_) {
        bg_join_waiting_ = false;
        const Cycles blocked = sim_.now() - wait_start_;
        exposed_total_ += blocked;
        pc_++;
        step();
      }
      return;
    }
    bg_busy_ = true;
    auto job = bg_jobs_.front();
    bg_jobs_.pop_front();
    const Cycles dur =
        static_cast<Cycles>(static_cast<double>(job.first) * bg_factor_ + 0.5);
    sim_.at(sim_.now() + dur, [this, job] {
      if (job.second) job.second();
      bg_start_next();
    });
  }

  void step() {
    while (pc_ < actions_.size()) {
      Action& a = actions_[pc_];
      switch (a.k) {
        case Action::K::Compute: {
          const Cycles dur = effective_compute_time(a.cycles, sys_.compute_budget);
          compute_total_ += dur;
          pc_++;
          sim_.at(sim_.now() + dur, [this] { step(); });
          return;
        }
        case Action::K::Issue: {
          coll_ids_[a.slot] = sim_.issue_collective(a.kind, a.bytes, coll_names_[a.slot]);
          if (optimized_ && a.slot == bg_update_after_slot_) {
            const Cycles upd = w_.layers[w_.embedding_layer()].wg_cycles;
            sim_.on_collective_done(coll_ids_[a.slot],
                                    [this, upd] { bg_enqueue(upd, nullptr); });
          }
          pc_++;
          break;
        }
        case Action::K::Wait: {
          const int id = coll_ids_[a.slot];
          if (id >= 0 && sim_.collective_done(id)) {
            pc_++;
            break;
          }
          wait_start_ = sim_.now();
          if (id < 0) {
            // not issued yet (background track will); resume via issue hook
            waiting_on_slot_ = a.slot;
            return;
          }
          sim_.on_collective_done(id, [this] {
            exposed_total_ += sim_.now() - wait_start_;
            pc_++;
            step();
          });
          return;
        }
        case Action::K::StartBgLookup: {
          const int emb = w_.embedding_layer();
          const Cycles lookup = w_.layers[emb].fwd_cycles;
          const Bytes bytes = w_.layers[emb].comm_bytes;
          const int slot = a2a_fwd_slot_[1];
          bg_enqueue(lookup, [this, slot, bytes] {
            coll_ids_[slot] = sim_.issue_collective(CollectiveKind::AllToAll, bytes,
                                                    coll_names_[slot]);
            maybe_resume_wait(slot);
          });
          pc_++;
          break;
        }
        case Action::K::JoinBg: {
          if (!bg_busy_ && bg_jobs_.empty()) {
            pc_++;
            break;
          }
          wait_start_ = sim_.now();
          bg_join_waiting_ = true;
          return;
        }
        case Action::K::End: {
          end_time_ = sim_.now();
          pc_++;
          return;
        }
      }
    }
  }

  // A Wait action may be blocked on a slot whose collective is only issued
  // later by the background track.
  void maybe_resume_wait(int slot) {
    if (pc_ >= actions_.size()) return;
    const Action& a = actions_[pc_];
    if (a.k == Action::K::Wait && a.slot == slot && waiting_on_slot_ == slot) {
      waiting_on_slot_ = -1;
      const int id = coll_ids_[slot];
      if (sim_.collective_done(id)) {
        exposed_total_ += sim_.now() - wait_start_;
        pc_++;
        step();
      } else {
        sim_.on_collective_done(id, [this] {
          exposed_total_ += sim_.now() - wait_start_;
          pc_++;
          step();
        });
      }
    }
  }

  const Workload& w_;
  const SystemConfig& sys_;
  Simulator sim_;
  bool optimized_ = false;
  double bg_factor_ = 1.0;

  std::vector<Action> actions_;
  std::size_t pc_ = 0;
  std::vector<int> coll_ids_;
  std::vector<std::string> coll_names_;
  std::array<int, 2> a2a_fwd_slot_{-1, -1};
  int bg_update_after_slot_ = -1;

  Cycles compute_total_ = 0;
  Cycles exposed_total_ = 0;
  Cycles wait_start_ = 0;
  Cycles end_time_ = 0;
  int waiting_on_slot_ = -1;

  std::deque<std::pair<Cycles, std::function<void()>>> bg_jobs_;
  bool bg_busy_ = false;
  bool bg_join_waiting_ = false;
};

}  // namespace

RunMetrics run_training(const Workload& w, const SystemConfig& sys, const Topology& topo) {
  LoopRunner runner(w, sys, topo, false);
  return runner.run();
}

RunMetrics run_dlrm_optimized(const Workload& w, const SystemConfig& sys, const Topology& topo) {
  LoopRunner runner(w, sys, topo, true);
  return runner.run();
}

RunMetrics run_microbenchmark(CollectiveKind kind, Bytes payload, const SystemConfig& sys,
                              const Topology& topo) {
  Simulator sim(topo, sys.setup);
  const int id = sim.issue_collective(kind, payload, "microbench." + std::string(to_string(kind)));
  sim.run();
  RunMetrics m;
  m.iteration_cycles = sim.collective_complete_time(id);
  m.total_compute_cycles = 0;
  m.exposed_comm_cycles = m.iteration_cycles;
  m.traffic = sim.stats().traffic;
  m.window_cycles = sim.stats().windows.window_cycles;
  const double links = static_cast<double>(topo.links().size());
  for (auto c : sim.stats().windows.active_links) {
    m.utilization.push_back(links > 0 ? static_cast<double>(c) / links : 0.0);
  }
  m.collectives.push_back({"microbench", sim.collective_issue_time(id),
                           sim.collective_complete_time(id)});
  for (Bytes d : sim.stats().link_delivered) m.network_bytes_delivered += d;
  if (m.iteration_cycles > 0) {
    m.effective_network_gbps = gbps_from_bytes_per_cycle(
        static_cast<double>(m.network_bytes_delivered) / static_cast<double>(m.iteration_cycles) /
        topo.node_count());
  }
  m.events = sim.stats().events_processed;
  return m;
}

}  // namespace collfab
