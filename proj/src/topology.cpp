/******************************************************************************
This source code is licensed under the MIT license found in the
LICENSE file in the root directory of this source tree.
*******************************************************************************/

#include "collfab/topology.hpp"

#include <cassert>

namespace collfab {

namespace {

void validate_link(const LinkClass& c, const char* name) {
  if (c.gbps <= 0.0) {
    throw ConfigError(std::string("link.") + name + ".gbps must be > 0");
  }
  if (c.latency < 1) {
    throw ConfigError(std::string("link.") + name + ".latency_cycles must be >= 1");
  }
  if (c.efficiency <= 0.0 || c.efficiency > 1.0) {
    throw ConfigError(std::string("link.") + name + ".efficiency must be in (0,1]");
  }
}

}  // namespace

Topology::Topology(int l_dim, int v_dim, int h_dim, const TorusParams& params)
    : dims_{l_dim, v_dim, h_dim}, params_(params) {
  if (l_dim < 1 || v_dim < 1 || h_dim < 1) {
    throw ConfigError("torus dimensions must all be >= 1");
  }
  validate_link(params.intra, "intra");
  validate_link(params.inter_v, "inter_v");
  validate_link(params.inter_h, "inter_h");

  const int n = node_count();
  link_index_.assign(static_cast<size_t>(n) * 6, -1);

  auto add_links = [&](Dim d, const LinkClass& cls) {
    const int len = dim(d);
    if (len < 2) return;  // degenerate dimension, no ring
    for (int src = 0; src < n; src++) {
      for (int direction : {+1, -1}) {
        Link link;
        link.id = static_cast<int>(links_.size());
        link.src = src;
        link.dst = neighbor(src, d, direction);
        link.dim = d;
        link.direction = direction;
        link.cls = cls;
        link_index_[static_cast<size_t>(src) * 6 + static_cast<int>(d) * 2 +
                    (direction > 0 ? 0 : 1)] = link.id;
        links_.push_back(link);
      }
    }
  };
  add_links(Dim::Local, params.intra);
  add_links(Dim::Vertical, params.inter_v);
  add_links(Dim::Horizontal, params.inter_h);
}

std::vector<int> Topology::ring_of(int flat, Dim d) const {
  const int len = dim(d);
  std::vector<int> ring;
  ring.reserve(len);
  int cur = flat;
  for (int i = 0; i < len; i++) {
    ring.push_back(cur);
    cur = neighbor(cur, d, +1);
  }
  assert(cur == flat && "ring must close after dim length steps");
  return ring;
}

int Topology::neighbor(int src, Dim d, int direction) const {
  NodeId c = coords(src);
  const int len = dim(d);
  auto step = [&](int x) { return ((x + direction) % len + len) % len; };
  switch (d) {
    case Dim::Local:
      c.l = step(c.l);
      break;
    case Dim::Vertical:
      c.v = step(c.v);
      break;
    case Dim::Horizontal:
      c.h = step(c.h);
      break;
  }
  return flat_id(c);
}

int Topology::link_from(int src, Dim d, int direction) const {
  return link_index_[static_cast<size_t>(src) * 6 + static_cast<int>(d) * 2 +
                     (direction > 0 ? 0 : 1)];
}

std::vector<Hop> Topology::xyz_route(int src, int dst) const {
  std::vector<Hop> route;
  NodeId from = coords(src);
  const NodeId to = coords(dst);

  auto walk = [&](Dim d, int cur_pos, int dst_pos) {
    const int len = dim(d);
    if (len < 2 || cur_pos == dst_pos) return;
    const int fwd = ((dst_pos - cur_pos) % len + len) % len;
    const int bwd = len - fwd;
    // shorter way around, tie toward increasing index
    const int direction = (fwd <= bwd) ? +1 : -1;
    const int steps = (direction > 0) ? fwd : bwd;
    int cur = flat_id(from);
    for (int i = 0; i < steps; i++) {
      Hop hop;
      hop.from = cur;
      hop.to = neighbor(cur, d, direction);
      hop.dim = d;
      hop.link_id = link_from(cur, d, direction);
      route.push_back(hop);
      cur = hop.to;
    }
    from = coords(cur);
  };

  walk(Dim::Local, from.l, to.l);
  walk(Dim::Vertical, from.v, to.v);
  walk(Dim::Horizontal, from.h, to.h);
  assert(route.empty() || route.back().to == dst);
  return route;
}

Topology build_torus(int l_dim, int v_dim, int h_dim, const TorusParams& params) {
  return Topology(l_dim, v_dim, h_dim, params);
}

NodeRings rings_of(const Topology& topo, int flat) {
  NodeRings r;
  r.local = topo.ring_of(flat, Dim::Local);
  r.vertical = topo.ring_of(flat, Dim::Vertical);
  r.horizontal = topo.ring_of(flat, Dim::Horizontal);
  return r;
}

}  // namespace collfab
