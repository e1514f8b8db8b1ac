/******************************************************************************
This source code is licensed under the MIT license found in the
LICENSE file in the root directory of this source tree.
*******************************************************************************/

#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <set>

#include "collfab/topology.hpp"

using namespace collfab;

TEST_CASE("flat id is a bijection") {
  Topology t = build_torus(4, 8, 4, {});
  std::set<int> seen;
  for (int h = 0; h < 4; h++) {
    for (int v = 0; v < 8; v++) {
      for (int l = 0; l < 4; l++) {
        const int id = t.flat_id({l, v, h});
        CHECK(id >= 0);
        CHECK(id < t.node_count());
        seen.insert(id);
        const NodeId back = t.coords(id);
        CHECK(back.l == l);
        CHECK(back.v == v);
        CHECK(back.h == h);
      }
    }
  }
  CHECK(seen.size() == 128);
}

TEST_CASE("4x4x4 has 64 nodes, 2 intra and 4 inter directed links per node") {
  Topology t = build_torus(4, 4, 4, {});
  CHECK(t.node_count() == 64);
  int intra = 0, inter = 0;
  for (const auto& link : t.links()) {
    (link.dim == Dim::Local ? intra : inter)++;
  }
  CHECK(intra == 64 * 2);
  CHECK(inter == 64 * 4);
}

TEST_CASE("single node torus has no links") {
  Topology t = build_torus(1, 1, 1, {});
  CHECK(t.node_count() == 1);
  CHECK(t.links().empty());
}

TEST_CASE("4x8x4 vertical rings have length 8 and close") {
  Topology t = build_torus(4, 8, 4, {});
  CHECK(t.node_count() == 128);
  for (int id = 0; id < t.node_count(); id += 7) {
    const auto ring = t.ring_of(id, Dim::Vertical);
    CHECK(ring.size() == 8);
    CHECK(ring.front() == id);
    // membership by index arithmetic: same l and h, all v values
    std::set<int> vs;
    for (int m : ring) {
      const NodeId c = t.coords(m);
      CHECK(c.l == t.coords(id).l);
      CHECK(c.h == t.coords(id).h);
      vs.insert(c.v);
    }
    CHECK(vs.size() == 8);
  }
}

TEST_CASE("rings of a degenerate dimension are singletons") {
  Topology t = build_torus(2, 1, 1, {});
  const auto rings = rings_of(t, 0);
  CHECK(rings.local == std::vector<int>{0, 1});
  CHECK(rings.vertical.size() == 1);
  CHECK(rings.horizontal.size() == 1);
}

TEST_CASE("local ring of (0,0,0) in 4x4x4 covers v=0,h=0") {
  Topology t = build_torus(4, 4, 4, {});
  const auto ring = t.ring_of(0, Dim::Local);
  CHECK(ring == std::vector<int>{0, 1, 2, 3});
}

TEST_CASE("xyz route basics") {
  Topology t = build_torus(4, 4, 4, {});
  CHECK(t.xyz_route(5, 5).empty());

  const auto one_hop = t.xyz_route(t.flat_id({0, 0, 0}), t.flat_id({1, 0, 0}));
  REQUIRE(one_hop.size() == 1);
  CHECK(one_hop[0].dim == Dim::Local);

  const auto diag = t.xyz_route(t.flat_id({0, 0, 0}), t.flat_id({1, 1, 1}));
  REQUIRE(diag.size() == 3);
  CHECK(diag[0].dim == Dim::Local);
  CHECK(diag[1].dim == Dim::Vertical);
  CHECK(diag[2].dim == Dim::Horizontal);
  CHECK(diag[2].to == t.flat_id({1, 1, 1}));
}

TEST_CASE("routes are dimension ordered, end at dst, within hop bound") {
  for (auto dims : {std::array<int, 3>{4, 4, 4}, {2, 3, 5}, {1, 4, 2}, {2, 1, 1}}) {
    Topology t = build_torus(dims[0], dims[1], dims[2], {});
    const int bound = dims[0] / 2 + dims[1] / 2 + dims[2] / 2;
    for (int s = 0; s < t.node_count(); s++) {
      for (int d = 0; d < t.node_count(); d++) {
        const auto route = t.xyz_route(s, d);
        CHECK(static_cast<int>(route.size()) <= bound);
        int cur = s;
        int last_dim = -1;
        for (const auto& hop : route) {
          CHECK(hop.from == cur);
          CHECK(static_cast<int>(hop.dim) >= last_dim);
          last_dim = static_cast<int>(hop.dim);
          CHECK(hop.link_id >= 0);
          CHECK(t.links()[hop.link_id].src == hop.from);
          CHECK(t.links()[hop.link_id].dst == hop.to);
          cur = hop.to;
        }
        CHECK(cur == d);
      }
    }
  }
}

TEST_CASE("tie on even rings breaks toward increasing index") {
  Topology t = build_torus(4, 1, 1, {});
  // distance 2 both ways; expect +1 direction
  const auto route = t.xyz_route(0, 2);
  REQUIRE(route.size() == 2);
  CHECK(route[0].to == 1);
}

TEST_CASE("zero or negative dimension is a configuration error") {
  CHECK_THROWS_AS(build_torus(0, 4, 4, {}), ConfigError);
  CHECK_THROWS_AS(build_torus(4, -1, 4, {}), ConfigError);
}

TEST_CASE("default link parameters convert to expected rates") {
  TorusParams p;
  CHECK(p.intra.milli_bytes_per_cycle() == 151004);  // 200 GB/s * 0.94 at 1245 MHz
  CHECK(p.inter_v.milli_bytes_per_cycle() == 18875);  // 25 GB/s * 0.94
  CHECK(p.intra.latency == 90);
  CHECK(p.inter_v.latency == 500);
}
