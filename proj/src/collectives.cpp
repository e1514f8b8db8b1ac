/******************************************************************************
This source code is licensed under the MIT license found in the
LICENSE file in the root directory of this source tree.
*******************************************************************************/

#include "collfab/collectives.hpp"

#include <algorithm>
#include <cassert>
#include <deque>
#include <sstream>

namespace collfab {

namespace {

int mod(int a, int k) {
  return ((a % k) + k) % k;
}

// Pads `bytes` up to a multiple of `unit`.
Bytes pad_to(Bytes bytes, Bytes unit) {
  return ceil_div(bytes, unit) * unit;
}

// Largest group count G <= target_groups such that segments split into G
// equal 4-byte-aligned messages.
int pick_groups(Bytes seg_bytes, Bytes msg_target) {
  int g = static_cast<int>(std::max<Bytes>(1, seg_bytes / std::max<Bytes>(msg_target, 4)));
  while (g > 1 && seg_bytes % (static_cast<Bytes>(g) * 4) != 0) g--;
  return g;
}

// Message size for one phase. Long-latency inter-package rings get finer
// messages so several groups keep both ring directions busy and rounds stay
// short; the round-trip latency otherwise dominates the phase.
Bytes phase_msg_target(Dim dim, Bytes seg_bytes, Bytes msg_target) {
  if (dim == Dim::Local || msg_target <= 1024) return msg_target;
  return std::min<Bytes>(msg_target, std::max<Bytes>(seg_bytes / 4, 1024));
}

class ScheduleBuilder {
 public:
  explicit ScheduleBuilder(CollectiveKind kind, int node_count) {
    sched_.kind = kind;
    sched_.node_count = node_count;
  }

  std::uint32_t add(Step step, std::vector<std::uint32_t> deps) {
    step.id = static_cast<std::uint32_t>(sched_.steps.size());
    sched_.steps.push_back(step);
    deps_.push_back(std::move(deps));
    return step.id;
  }

  std::uint32_t new_pair() { return pair_count_++; }

  CollectiveSchedule finish(ChunkPlan plan) {
    sched_.plan = std::move(plan);
    sched_.pair_count = pair_count_;
    sched_.dep_start.assign(sched_.steps.size() + 1, 0);
    std::size_t total = 0;
    for (std::size_t i = 0; i < deps_.size(); i++) {
      sched_.dep_start[i] = static_cast<std::uint32_t>(total);
      total += deps_[i].size();
    }
    sched_.dep_start[deps_.size()] = static_cast<std::uint32_t>(total);
    sched_.dep_edges.reserve(total);
    for (auto& d : deps_) {
      sched_.dep_edges.insert(sched_.dep_edges.end(), d.begin(), d.end());
    }
    sched_.send_of_pair.assign(pair_count_, kNoId);
    sched_.recv_of_pair.assign(pair_count_, kNoId);
    for (const auto& s : sched_.steps) {
      if (s.kind == StepKind::SendMsg) sched_.send_of_pair[s.pair] = s.id;
      if (s.kind == StepKind::RecvMsg) sched_.recv_of_pair[s.pair] = s.id;
    }
    return std::move(sched_);
  }

 private:
  CollectiveSchedule sched_;
  std::vector<std::vector<std::uint32_t>> deps_;
  std::uint32_t pair_count_ = 0;
};

using DepList = std::vector<std::uint32_t>;

int ring_link(const RingRef& ring, int node, int direction) {
  if (ring.topo == nullptr) return -1;
  return ring.topo->link_from(node, ring.dim, direction);
}

struct RingOp {
  // Per ring position: steps after which the node's view of the region is
  // final for this op. Next-phase steps at that node depend on these.
  std::vector<DepList> exits;
};

enum class RingMode { ReduceScatter, AllGather, AllReduce };

// Emits one ring collective over region [base, base+region) of the chunk
// state. Message groups alternate ring directions (flipped by dir_flip).
// `final_store` marks StoreFinal steps emitted for chunk-final data.
RingOp build_ring_op(ScheduleBuilder& b, const RingRef& ring, RingMode mode, Bytes base,
                     Bytes region, Bytes msg_target, bool dir_flip, int rs_phase, int ag_phase,
                     const std::vector<DepList>& entry) {
  const int k = static_cast<int>(ring.nodes.size());
  RingOp op;
  op.exits.assign(k, {});
  if (k < 2) {
    op.exits = entry;
    return op;
  }
  assert(region % (static_cast<Bytes>(k) * 4) == 0);
  const Bytes seg = region / static_cast<Bytes>(k);
  const int groups = pick_groups(seg, phase_msg_target(ring.dim, seg, msg_target));
  const Bytes msg = seg / static_cast<Bytes>(groups);

  for (int i = 0; i < k; i++) op.exits[i] = entry.size() == static_cast<size_t>(k) ? entry[i] : DepList{};

  for (int g = 0; g < groups; g++) {
    const int dir = ((g + (dir_flip ? 1 : 0)) % 2 == 0) ? +1 : -1;
    auto seg_off = [&](int seg_idx) {
      return base + static_cast<Bytes>(seg_idx) * seg + static_cast<Bytes>(g) * msg;
    };

    // ids of last round's steps, per ring position
    std::vector<std::uint32_t> last_reduce(k, kNoId);
    std::vector<std::uint32_t> last_recv(k, kNoId);
    std::vector<std::uint32_t> last_recv_pair(k, kNoId);

    if (mode != RingMode::AllGather) {
      // reduce-scatter rotation: position i ends owning segment (i+1) mod k
      for (int r = 0; r <= k - 2; r++) {
        std::vector<std::uint32_t> send_id(k), send_pair(k);
        for (int i = 0; i < k; i++) {
          const int seg_send = dir > 0 ? mod(i - r, k) : mod(i + r + 2, k);
          Step s;
          s.node = ring.nodes[i];
          s.kind = StepKind::SendMsg;
          s.bytes = msg;
          s.range_offset = seg_off(seg_send);
          s.pair = b.new_pair();
          s.peer = ring.nodes[mod(i + dir, k)];
          s.link_id = ring_link(ring, ring.nodes[i], dir);
          s.source = (r == 0) ? SendSource::LocalData : SendSource::ReducedData;
          s.phase = static_cast<std::uint16_t>(rs_phase);
          DepList deps = (r == 0) ? (entry.size() == static_cast<size_t>(k) ? entry[i] : DepList{})
                                  : DepList{last_reduce[i]};
          send_pair[i] = s.pair;
          send_id[i] = b.add(s, std::move(deps));
        }
        for (int i = 0; i < k; i++) {
          const int from = mod(i - dir, k);
          const int seg_recv = dir > 0 ? mod(from - r, k) : mod(from + r + 2, k);
          Step rc;
          rc.node = ring.nodes[i];
          rc.kind = StepKind::RecvMsg;
          rc.bytes = msg;
          rc.range_offset = seg_off(seg_recv);
          rc.pair = send_pair[from];
          rc.peer = ring.nodes[from];
          rc.phase = static_cast<std::uint16_t>(rs_phase);
          const std::uint32_t rc_id = b.add(rc, {send_id[from]});

          Step rd;
          rd.node = ring.nodes[i];
          rd.kind = StepKind::ReduceLocal;
          rd.bytes = msg;
          rd.range_offset = seg_off(seg_recv);
          rd.pair = send_pair[from];
          rd.phase = static_cast<std::uint16_t>(rs_phase);
          DepList rd_deps{rc_id};
          if (r == 0) {
            if (entry.size() == static_cast<size_t>(k)) {
              rd_deps.insert(rd_deps.end(), entry[i].begin(), entry[i].end());
            }
          } else {
            rd_deps.push_back(last_reduce[i]);
          }
          last_reduce[i] = b.add(rd, std::move(rd_deps));
        }
      }
      // Owned segment (i+1 mod k) is now reduced. It is chunk-final for a
      // plain reduce-scatter / all-reduce; inside a hierarchy it is the
      // working set of the next phase but the baseline still writes it back.
      for (int i = 0; i < k; i++) {
        Step st;
        st.node = ring.nodes[i];
        st.kind = StepKind::StoreFinal;
        st.bytes = msg;
        st.range_offset = seg_off(mod(i + 1, k));
        st.store_from_reduce = true;
        st.phase = static_cast<std::uint16_t>(rs_phase);
        b.add(st, {last_reduce[i]});
        op.exits[i] = {last_reduce[i]};
      }
      if (mode == RingMode::ReduceScatter) continue;
    }

    if (mode != RingMode::ReduceScatter) {
      // all-gather rotation over the same ownership: own(i) = (i+1) mod k
      for (int r = 0; r <= k - 2; r++) {
        std::vector<std::uint32_t> send_id(k), send_pair(k);
        for (int i = 0; i < k; i++) {
          const int seg_send = dir > 0 ? mod(i - r + 1, k) : mod(i + r + 1, k);
          Step s;
          s.node = ring.nodes[i];
          s.kind = StepKind::SendMsg;
          s.bytes = msg;
          s.range_offset = seg_off(seg_send);
          s.pair = b.new_pair();
          s.peer = ring.nodes[mod(i + dir, k)];
          s.link_id = ring_link(ring, ring.nodes[i], dir);
          s.phase = static_cast<std::uint16_t>(ag_phase);
          DepList deps;
          if (r == 0) {
            if (mode == RingMode::AllReduce) {
              // same-cycle handoff from the final reduce-scatter step
              deps = {last_reduce[i]};
              s.source = SendSource::LocalData;
            } else {
              deps = entry.size() == static_cast<size_t>(k) ? entry[i] : DepList{};
              s.source = SendSource::LocalData;
            }
          } else {
            deps = {last_recv[i]};
            s.source = SendSource::ForwardedData;
            s.fwd_of = last_recv_pair[i];
          }
          send_pair[i] = s.pair;
          send_id[i] = b.add(s, std::move(deps));
        }
        std::vector<std::uint32_t> recv_id(k), recv_pair(k);
        for (int i = 0; i < k; i++) {
          const int from = mod(i - dir, k);
          const int seg_recv = dir > 0 ? mod(from - r + 1, k) : mod(from + r + 1, k);
          Step rc;
          rc.node = ring.nodes[i];
          rc.kind = StepKind::RecvMsg;
          rc.bytes = msg;
          rc.range_offset = seg_off(seg_recv);
          rc.pair = send_pair[from];
          rc.peer = ring.nodes[from];
          rc.phase = static_cast<std::uint16_t>(ag_phase);
          recv_id[i] = b.add(rc, {send_id[from]});
          recv_pair[i] = send_pair[from];

          Step st;
          st.node = ring.nodes[i];
          st.kind = StepKind::StoreFinal;
          st.bytes = msg;
          st.range_offset = seg_off(seg_recv);
          st.pair = send_pair[from];
          st.store_from_reduce = false;
          st.phase = static_cast<std::uint16_t>(ag_phase);
          const std::uint32_t st_id = b.add(st, {recv_id[i]});
          op.exits[i].push_back(st_id);
        }
        last_recv = recv_id;
        last_recv_pair = recv_pair;
      }
    }
  }
  return op;
}

PhasePlan make_phase(Dim dim, int ring_len, Bytes region, Bytes msg_target, Bytes input,
                     Bytes result, double ring_gbps) {
  PhasePlan p;
  p.dim = dim;
  p.ring_len = ring_len;
  const Bytes seg = region / static_cast<Bytes>(ring_len);
  p.groups = pick_groups(seg, phase_msg_target(dim, seg, msg_target));
  p.msg_bytes = seg / static_cast<Bytes>(p.groups);
  p.input_bytes = input;
  p.result_bytes = result;
  p.ring_gbps = ring_gbps;
  return p;
}

CollectiveSchedule plan_flat_ring(CollectiveKind kind, RingMode mode, const RingRef& ring,
                                  Bytes payload_bytes, Bytes message_bytes, bool dir_flip) {
  const int k = static_cast<int>(ring.nodes.size());
  ScheduleBuilder b(kind, k);
  ChunkPlan plan;
  plan.payload_bytes = payload_bytes;
  plan.message_bytes = message_bytes;
  if (k >= 2 && payload_bytes > 0) {
    plan.padded_bytes = pad_to(payload_bytes, static_cast<Bytes>(k) * 4);
    plan.pad_bytes = plan.padded_bytes - payload_bytes;
    const Bytes region = plan.padded_bytes;
    double gbps = 0.0;
    if (ring.topo != nullptr) {
      const auto& tp = ring.topo->params();
      const LinkClass& cls = ring.dim == Dim::Local ? tp.intra
                             : ring.dim == Dim::Vertical ? tp.inter_v
                                                         : tp.inter_h;
      gbps = 2.0 * cls.gbps;
    }
    // A flat ring collective is a single phase; the all-reduce's gather half
    // reuses the reduce-scatter's ring and data in place.
    const Bytes input = mode == RingMode::AllGather ? region / k : region;
    const Bytes result = mode == RingMode::ReduceScatter ? region / k : region;
    plan.phases.push_back(make_phase(ring.dim, k, region, message_bytes, input, result, gbps));
    build_ring_op(b, ring, mode, 0, region, message_bytes, dir_flip, 0, 0, {});
  } else {
    plan.padded_bytes = payload_bytes;
  }
  return b.finish(std::move(plan));
}

}  // namespace

const char* to_string(CollectiveKind k) {
  switch (k) {
    case CollectiveKind::ReduceScatter:
      return "reduce_scatter";
    case CollectiveKind::AllGather:
      return "all_gather";
    case CollectiveKind::AllReduce:
      return "all_reduce";
    case CollectiveKind::AllToAll:
      return "all_to_all";
  }
  return "?";
}

CollectiveSchedule plan_ring_reduce_scatter(const RingRef& ring, Bytes payload_bytes,
                                            Bytes message_bytes, bool dir_flip) {
  return plan_flat_ring(CollectiveKind::ReduceScatter, RingMode::ReduceScatter, ring,
                        payload_bytes, message_bytes, dir_flip);
}

CollectiveSchedule plan_ring_all_gather(const RingRef& ring, Bytes payload_bytes,
                                        Bytes message_bytes, bool dir_flip) {
  return plan_flat_ring(CollectiveKind::AllGather, RingMode::AllGather, ring, payload_bytes,
                        message_bytes, dir_flip);
}

CollectiveSchedule plan_ring_all_reduce(const RingRef& ring, Bytes payload_bytes,
                                        Bytes message_bytes, bool dir_flip) {
  return plan_flat_ring(CollectiveKind::AllReduce, RingMode::AllReduce, ring, payload_bytes,
                        message_bytes, dir_flip);
}

CollectiveSchedule plan_hierarchical_all_reduce(const Topology& topo, Bytes chunk_bytes,
                                                Bytes message_bytes, bool dir_flip) {
  const int L = topo.dim(Dim::Local);
  const int V = topo.dim(Dim::Vertical);
  const int H = topo.dim(Dim::Horizontal);
  const int n = topo.node_count();
  ScheduleBuilder b(CollectiveKind::AllReduce, n);

  ChunkPlan plan;
  plan.payload_bytes = chunk_bytes;
  plan.message_bytes = message_bytes;
  plan.padded_bytes =
      pad_to(chunk_bytes, 4ull * static_cast<Bytes>(L) * static_cast<Bytes>(V) * static_cast<Bytes>(H));
  plan.pad_bytes = plan.padded_bytes - chunk_bytes;
  const Bytes region = plan.padded_bytes;
  const Bytes owned = region / static_cast<Bytes>(L);

  if (n == 1 || chunk_bytes == 0) {
    return b.finish(std::move(plan));
  }

  const auto& tp = topo.params();
  // All exit dependency lists, indexed by flat node id.
  std::vector<DepList> carry(n);
  int phase = 0;

  // phase 1: reduce-scatter on local rings
  if (L >= 2) {
    plan.phases.push_back(
        make_phase(Dim::Local, L, region, message_bytes, region, owned, 2.0 * tp.intra.gbps));
    for (int h = 0; h < H; h++) {
      for (int v = 0; v < V; v++) {
        RingRef ring;
        ring.topo = &topo;
        ring.dim = Dim::Local;
        ring.nodes = topo.ring_of(topo.flat_id({0, v, h}), Dim::Local);
        auto op = build_ring_op(b, ring, RingMode::ReduceScatter, 0, region, message_bytes,
                                dir_flip, phase, phase, {});
        for (int i = 0; i < L; i++) carry[ring.nodes[i]] = op.exits[i];
      }
    }
    phase++;
  }

  // owned segment byte range of a node with local coordinate l
  auto owned_base = [&](int l) {
    return L >= 2 ? static_cast<Bytes>(mod(l + 1, L)) * owned : 0;
  };

  // phases 2 and 3: all-reduce over vertical then horizontal rings
  for (Dim d : {Dim::Vertical, Dim::Horizontal}) {
    const int len = topo.dim(d);
    if (len < 2) continue;
    const LinkClass& cls = d == Dim::Vertical ? tp.inter_v : tp.inter_h;
    plan.phases.push_back(make_phase(d, len, owned, message_bytes, owned, owned, 2.0 * cls.gbps));
    for (int flat = 0; flat < n; flat++) {
      const NodeId c = topo.coords(flat);
      const bool ring_head = (d == Dim::Vertical) ? (c.v == 0) : (c.h == 0);
      if (!ring_head) continue;
      RingRef ring;
      ring.topo = &topo;
      ring.dim = d;
      ring.nodes = topo.ring_of(flat, d);
      std::vector<DepList> entry(len);
      for (int i = 0; i < len; i++) entry[i] = carry[ring.nodes[i]];
      auto op = build_ring_op(b, ring, RingMode::AllReduce, owned_base(c.l), owned, message_bytes,
                              dir_flip, phase, phase, entry);
      for (int i = 0; i < len; i++) carry[ring.nodes[i]] = op.exits[i];
    }
    phase++;
  }

  // phase 4: all-gather on local rings
  if (L >= 2) {
    plan.phases.push_back(
        make_phase(Dim::Local, L, region, message_bytes, owned, region, 2.0 * tp.intra.gbps));
    for (int h = 0; h < H; h++) {
      for (int v = 0; v < V; v++) {
        RingRef ring;
        ring.topo = &topo;
        ring.dim = Dim::Local;
        ring.nodes = topo.ring_of(topo.flat_id({0, v, h}), Dim::Local);
        std::vector<DepList> entry(L);
        for (int i = 0; i < L; i++) entry[i] = carry[ring.nodes[i]];
        build_ring_op(b, ring, RingMode::AllGather, 0, region, message_bytes, dir_flip, phase,
                      phase, entry);
      }
    }
    phase++;
  }

  return b.finish(std::move(plan));
}

CollectiveSchedule plan_direct_all_to_all(const Topology& topo, Bytes payload_bytes,
                                          Bytes message_bytes) {
  const int n = topo.node_count();
  ScheduleBuilder b(CollectiveKind::AllToAll, n);
  ChunkPlan plan;
  plan.payload_bytes = payload_bytes;
  plan.message_bytes = message_bytes;
  plan.padded_bytes = pad_to(payload_bytes, static_cast<Bytes>(n) * 4);
  plan.pad_bytes = plan.padded_bytes - payload_bytes;
  if (n == 1 || payload_bytes == 0) {
    return b.finish(std::move(plan));
  }

  const Bytes portion = plan.padded_bytes / static_cast<Bytes>(n);
  const int pieces = pick_groups(portion, message_bytes);
  const Bytes piece = portion / static_cast<Bytes>(pieces);

  const auto& tp = topo.params();
  PhasePlan ph;
  ph.dim = Dim::Local;
  ph.ring_len = n;
  ph.groups = pieces;
  ph.msg_bytes = piece;
  ph.input_bytes = plan.padded_bytes;
  ph.result_bytes = plan.padded_bytes;
  ph.ring_gbps = 2.0 * (tp.intra.gbps + tp.inter_v.gbps + tp.inter_h.gbps);
  plan.phases.push_back(ph);

  for (int src = 0; src < n; src++) {
    for (int dst = 0; dst < n; dst++) {
      if (src == dst) continue;  // local portion stays in place
      const auto route = topo.xyz_route(src, dst);
      assert(!route.empty());
      for (int p = 0; p < pieces; p++) {
        const Bytes src_off = static_cast<Bytes>(dst) * portion + static_cast<Bytes>(p) * piece;
        const Bytes dst_off = static_cast<Bytes>(src) * portion + static_cast<Bytes>(p) * piece;
        std::uint32_t prev_step = kNoId;
        std::uint32_t prev_pair = kNoId;
        for (std::size_t hop = 0; hop < route.size(); hop++) {
          Step s;
          s.node = route[hop].from;
          s.kind = StepKind::SendMsg;
          s.bytes = piece;
          s.range_offset = src_off;
          s.pair = b.new_pair();
          s.peer = route[hop].to;
          s.link_id = route[hop].link_id;
          s.source = hop == 0 ? SendSource::LocalData : SendSource::ForwardedData;
          s.fwd_of = hop == 0 ? kNoId : prev_pair;
          const std::uint32_t send_id =
              b.add(s, prev_step == kNoId ? DepList{} : DepList{prev_step});

          Step rc;
          rc.node = route[hop].to;
          rc.kind = StepKind::RecvMsg;
          rc.bytes = piece;
          rc.range_offset = dst_off;
          rc.pair = s.pair;
          rc.peer = route[hop].from;
          prev_step = b.add(rc, {send_id});
          prev_pair = s.pair;
        }
        Step st;
        st.node = dst;
        st.kind = StepKind::StoreFinal;
        st.bytes = piece;
        st.range_offset = dst_off;
        st.pair = prev_pair;
        st.store_from_reduce = false;
        b.add(st, {prev_step});
      }
    }
  }
  return b.finish(std::move(plan));
}

Bytes CollectiveSchedule::total_send_bytes() const {
  Bytes total = 0;
  for (const auto& s : steps) {
    if (s.kind == StepKind::SendMsg) total += s.bytes;
  }
  return total;
}

Bytes CollectiveSchedule::node_send_bytes(int node) const {
  Bytes total = 0;
  for (const auto& s : steps) {
    if (s.kind == StepKind::SendMsg && s.node == node) total += s.bytes;
  }
  return total;
}

void CollectiveSchedule::validate() const {
  for (std::uint32_t p = 0; p < pair_count; p++) {
    if (send_of_pair[p] == kNoId || recv_of_pair[p] == kNoId) {
      throw ScheduleError("unmatched send/recv for pair " + std::to_string(p));
    }
  }
  // Kahn's algorithm over the dependency DAG
  std::vector<std::uint32_t> pending(steps.size(), 0);
  std::vector<std::vector<std::uint32_t>> dependents(steps.size());
  for (std::uint32_t i = 0; i < steps.size(); i++) {
    pending[i] = dep_start[i + 1] - dep_start[i];
    for (std::uint32_t e = dep_start[i]; e < dep_start[i + 1]; e++) {
      dependents[dep_edges[e]].push_back(i);
    }
  }
  std::deque<std::uint32_t> ready;
  for (std::uint32_t i = 0; i < steps.size(); i++) {
    if (pending[i] == 0) ready.push_back(i);
  }
  std::size_t done = 0;
  while (!ready.empty()) {
    const std::uint32_t cur = ready.front();
    ready.pop_front();
    done++;
    for (auto d : dependents[cur]) {
      if (--pending[d] == 0) ready.push_back(d);
    }
  }
  if (done != steps.size()) {
    throw ScheduleError("dependency cycle: " + std::to_string(steps.size() - done) +
                        " steps unreachable");
  }
}

std::string CollectiveSchedule::dump_jsonl() const {
  static const char* kind_names[] = {"send", "recv", "reduce", "store", "load_mem", "write_mem"};
  static const char* src_names[] = {"local", "reduced", "forwarded"};
  std::ostringstream out;
  for (const auto& s : steps) {
    out << "{\"id\":" << s.id << ",\"node\":" << s.node << ",\"kind\":\""
        << kind_names[static_cast<int>(s.kind)] << "\",\"bytes\":" << s.bytes << ",\"offset\":"
        << s.range_offset << ",\"phase\":" << s.phase;
    if (s.kind == StepKind::SendMsg) {
      out << ",\"dst\":" << s.peer << ",\"pair\":" << s.pair << ",\"source\":\""
          << src_names[static_cast<int>(s.source)] << "\"";
      if (s.link_id >= 0) out << ",\"link\":" << s.link_id;
    } else if (s.kind == StepKind::RecvMsg) {
      out << ",\"src\":" << s.peer << ",\"pair\":" << s.pair;
    } else if (s.kind == StepKind::StoreFinal) {
      out << ",\"from_reduce\":" << (s.store_from_reduce ? "true" : "false");
    }
    out << ",\"deps\":[";
    for (std::uint32_t e = dep_start[s.id]; e < dep_start[s.id + 1]; e++) {
      if (e != dep_start[s.id]) out << ",";
      out << dep_edges[e];
    }
    out << "]}\n";
  }
  return out.str();
}

}  // namespace collfab
