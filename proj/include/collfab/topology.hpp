/******************************************************************************
This source code is licensed under the MIT license found in the
LICENSE file in the root directory of this source tree.
*******************************************************************************/

#ifndef COLLFAB_TOPOLOGY_HPP
#define COLLFAB_TOPOLOGY_HPP

#include <array>
#include <cstdint>
#include <vector>

#include "collfab/common.hpp"

namespace collfab {

// Dimension order is fixed: local (intra-package ring), then vertical, then
// horizontal inter-package rings.
enum class Dim : std::uint8_t { Local = 0, Vertical = 1, Horizontal = 2 };
constexpr int kDims = 3;

enum class LinkKind : std::uint8_t { IntraPackage = 0, InterVertical = 1, InterHorizontal = 2 };

struct LinkClass {
  LinkKind kind = LinkKind::IntraPackage;
  double gbps = 0.0;
  Cycles latency = 1;
  double efficiency = 1.0;

  std::uint64_t milli_bytes_per_cycle() const {
    return collfab::milli_bytes_per_cycle(gbps, efficiency);
  }
};

struct NodeId {
  int l = 0;
  int v = 0;
  int h = 0;

  bool operator==(const NodeId&) const = default;
};

// One directed channel endpoint-to-endpoint. A bidirectional ring link is two
// of these, one per direction.
struct Link {
  int id = 0;
  int src = 0;
  int dst = 0;
  Dim dim = Dim::Local;
  // +1 walks toward increasing index in the ring, -1 toward decreasing.
  int direction = 1;
  LinkClass cls;
};

struct Hop {
  int from = 0;
  int to = 0;
  Dim dim = Dim::Local;
  int link_id = 0;
};

struct TorusParams {
  LinkClass intra{LinkKind::IntraPackage, 200.0, 90, 0.94};
  LinkClass inter_v{LinkKind::InterVertical, 25.0, 500, 0.94};
  LinkClass inter_h{LinkKind::InterHorizontal, 25.0, 500, 0.94};
};

// L x V x H torus with one bidirectional ring per dimension per node. Nodes
// are flat-indexed as l + L*v + L*V*h. Immutable after construction.
class Topology {
 public:
  Topology(int l_dim, int v_dim, int h_dim, const TorusParams& params);

  int dim(Dim d) const { return dims_[static_cast<int>(d)]; }
  int node_count() const { return dims_[0] * dims_[1] * dims_[2]; }
  const std::vector<Link>& links() const { return links_; }
  const TorusParams& params() const { return params_; }

  int flat_id(const NodeId& n) const {
    return n.l + dims_[0] * n.v + dims_[0] * dims_[1] * n.h;
  }
  NodeId coords(int flat) const {
    NodeId n;
    n.l = flat % dims_[0];
    n.v = (flat / dims_[0]) % dims_[1];
    n.h = flat / (dims_[0] * dims_[1]);
    return n;
  }

  // Cyclic ring containing `flat` in dimension `d`, starting at `flat`.
  std::vector<int> ring_of(int flat, Dim d) const;

  // Directed link id from `src` one step along `d` in `direction` (+1/-1).
  // Returns -1 when the dimension is degenerate (length 1).
  int link_from(int src, Dim d, int direction) const;

  int neighbor(int src, Dim d, int direction) const;

  // Dimension-ordered route: local hops first, then vertical, then
  // horizontal. Each dimension takes the shorter way around its ring, ties
  // broken toward increasing index.
  std::vector<Hop> xyz_route(int src, int dst) const;

 private:
  std::array<int, kDims> dims_;
  TorusParams params_;
  std::vector<Link> links_;
  // link_index_[node*6 + dim*2 + (direction>0 ? 0 : 1)] -> link id or -1
  std::vector<int> link_index_;
};

Topology build_torus(int l_dim, int v_dim, int h_dim, const TorusParams& params = {});

struct NodeRings {
  std::vector<int> local;
  std::vector<int> vertical;
  std::vector<int> horizontal;
};

// All three rings through a node, each starting at the node itself.
NodeRings rings_of(const Topology& topo, int flat);

}  // namespace collfab

#endif
