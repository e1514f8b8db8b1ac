/******************************************************************************
This source code is licensed under the MIT license found in the
LICENSE file in the root directory of this source tree.
*******************************************************************************/

#include "collfab/config.hpp"

#include <fstream>
#include <set>
#include <sstream>

#include <json.hpp>

namespace collfab {

using json = nlohmann::ordered_json;

namespace {

void reject_unknown(const json& j, const std::set<std::string>& known, const std::string& where) {
  if (!j.is_object()) throw ConfigError(where + " must be an object");
  for (auto it = j.begin(); it != j.end(); ++it) {
    if (known.find(it.key()) == known.end()) {
      throw ConfigError("unknown config key '" + where + "." + it.key() + "'");
    }
  }
}

template <typename T>
void get_if(const json& j, const char* key, T& out) {
  if (j.contains(key)) out = j.at(key).get<T>();
}

void parse_link(const json& j, const std::string& where, LinkClass& cls) {
  reject_unknown(j, {"gbps", "latency_cycles", "efficiency"}, where);
  get_if(j, "gbps", cls.gbps);
  std::uint64_t lat = cls.latency;
  get_if(j, "latency_cycles", lat);
  cls.latency = lat;
  get_if(j, "efficiency", cls.efficiency);
}

json link_to_json(const LinkClass& cls) {
  return json{{"gbps", cls.gbps}, {"latency_cycles", cls.latency}, {"efficiency", cls.efficiency}};
}

}  // namespace

RunConfig parse_config_text(const std::string& text) {
  json j;
  try {
    j = json::parse(text, nullptr, true, /*ignore_comments=*/true);
  } catch (const json::exception& e) {
    throw ConfigError(std::string("config parse error: ") + e.what());
  }
  RunConfig cfg;
  reject_unknown(j,
                 {"dims", "link", "clock_note", "endpoint", "ace", "collective", "system_config",
                  "workload", "output", "seed"},
                 "config");

  if (j.contains("dims")) {
    const auto& d = j.at("dims");
    reject_unknown(d, {"L", "V", "H"}, "dims");
    if (!d.contains("L") || !d.contains("V") || !d.contains("H")) {
      throw ConfigError("dims requires keys dims.L, dims.V, dims.H");
    }
    cfg.dims_l = d.at("L").get<int>();
    cfg.dims_v = d.at("V").get<int>();
    cfg.dims_h = d.at("H").get<int>();
  }
  if (j.contains("link")) {
    const auto& l = j.at("link");
    reject_unknown(l, {"intra", "inter_v", "inter_h"}, "link");
    if (l.contains("intra")) parse_link(l.at("intra"), "link.intra", cfg.links.intra);
    if (l.contains("inter_v")) parse_link(l.at("inter_v"), "link.inter_v", cfg.links.inter_v);
    if (l.contains("inter_h")) parse_link(l.at("inter_h"), "link.inter_h", cfg.links.inter_h);
  }
  if (j.contains("endpoint")) {
    const auto& e = j.at("endpoint");
    reject_unknown(e,
                   {"mem_bw_gbps", "mem_bw_comm_gbps", "sm_total", "sm_comm",
                    "per_sm_bytes_per_cycle", "bus_npu_afi_gbps", "bus_npu_mem_gbps",
                    "in_flight_chunks"},
                   "endpoint");
    get_if(e, "mem_bw_gbps", cfg.endpoint.mem_bw_gbps);
    get_if(e, "mem_bw_comm_gbps", cfg.endpoint.mem_bw_comm_gbps);
    get_if(e, "sm_total", cfg.endpoint.sm_total);
    get_if(e, "sm_comm", cfg.endpoint.sm_comm);
    get_if(e, "per_sm_bytes_per_cycle", cfg.endpoint.per_sm_bytes_per_cycle);
    get_if(e, "bus_npu_afi_gbps", cfg.endpoint.bus_npu_afi_gbps);
    get_if(e, "bus_npu_mem_gbps", cfg.endpoint.bus_npu_mem_gbps);
    get_if(e, "in_flight_chunks", cfg.endpoint.in_flight_chunks);
  }
  if (j.contains("ace")) {
    const auto& a = j.at("ace");
    reject_unknown(a, {"sram_mib", "fsm_count", "alu_count", "dma_gbps"}, "ace");
    if (a.contains("sram_mib")) cfg.ace.sram_bytes = a.at("sram_mib").get<Bytes>() << 20;
    get_if(a, "fsm_count", cfg.ace.fsm_count);
    get_if(a, "alu_count", cfg.ace.alu_count);
    get_if(a, "dma_gbps", cfg.ace.dma_gbps);
  }
  if (j.contains("collective")) {
    const auto& c = j.at("collective");
    reject_unknown(c, {"chunk_kib", "message_kib"}, "collective");
    if (c.contains("chunk_kib")) cfg.chunk_bytes = c.at("chunk_kib").get<Bytes>() << 10;
    if (c.contains("message_kib")) cfg.message_bytes = c.at("message_kib").get<Bytes>() << 10;
  }
  if (j.contains("system_config")) {
    cfg.system_config = j.at("system_config").get<std::string>();
    system_kind_from(cfg.system_config);  // validate
  }
  if (j.contains("workload")) {
    const auto& w = j.at("workload");
    reject_unknown(w, {"trace", "loop", "microbenchmark"}, "workload");
    get_if(w, "trace", cfg.trace);
    get_if(w, "loop", cfg.loop);
    if (cfg.loop != "default" && cfg.loop != "dlrm_optimized") {
      throw ConfigError("workload.loop must be 'default' or 'dlrm_optimized'");
    }
    if (w.contains("microbenchmark")) {
      const auto& m = w.at("microbenchmark");
      reject_unknown(m, {"kind", "payload_mib"}, "workload.microbenchmark");
      if (!m.contains("kind") || !m.contains("payload_mib")) {
        throw ConfigError("workload.microbenchmark requires kind and payload_mib");
      }
      cfg.microbench_kind = m.at("kind").get<std::string>();
      if (cfg.microbench_kind != "all_reduce" && cfg.microbench_kind != "all_to_all") {
        throw ConfigError("workload.microbenchmark.kind must be all_reduce or all_to_all");
      }
      cfg.microbench_payload = m.at("payload_mib").get<Bytes>() << 20;
    }
  }
  if (j.contains("output")) {
    const auto& o = j.at("output");
    reject_unknown(o, {"dir"}, "output");
    get_if(o, "dir", cfg.out_dir);
  }
  get_if(j, "seed", cfg.seed);

  if (cfg.trace.empty() && cfg.microbench_kind.empty()) {
    throw ConfigError("config needs workload.trace or workload.microbenchmark");
  }
  if (!cfg.trace.empty() && !cfg.microbench_kind.empty()) {
    throw ConfigError("workload.trace and workload.microbenchmark are mutually exclusive");
  }
  return cfg;
}

RunConfig parse_config_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config file " + path);
  std::ostringstream buf;
  buf << in.rdbuf();
  return parse_config_text(buf.str());
}

std::string serialize_config(const RunConfig& cfg) {
  json j;
  j["dims"] = {{"L", cfg.dims_l}, {"V", cfg.dims_v}, {"H", cfg.dims_h}};
  j["link"] = {{"intra", link_to_json(cfg.links.intra)},
               {"inter_v", link_to_json(cfg.links.inter_v)},
               {"inter_h", link_to_json(cfg.links.inter_h)}};
  j["endpoint"] = {{"mem_bw_gbps", cfg.endpoint.mem_bw_gbps},
                   {"mem_bw_comm_gbps", cfg.endpoint.mem_bw_comm_gbps},
                   {"sm_total", cfg.endpoint.sm_total},
                   {"sm_comm", cfg.endpoint.sm_comm},
                   {"per_sm_bytes_per_cycle", cfg.endpoint.per_sm_bytes_per_cycle},
                   {"bus_npu_afi_gbps", cfg.endpoint.bus_npu_afi_gbps},
                   {"bus_npu_mem_gbps", cfg.endpoint.bus_npu_mem_gbps},
                   {"in_flight_chunks", cfg.endpoint.in_flight_chunks}};
  j["ace"] = {{"sram_mib", cfg.ace.sram_bytes >> 20},
              {"fsm_count", cfg.ace.fsm_count},
              {"alu_count", cfg.ace.alu_count},
              {"dma_gbps", cfg.ace.dma_gbps}};
  j["collective"] = {{"chunk_kib", cfg.chunk_bytes >> 10}, {"message_kib", cfg.message_bytes >> 10}};
  j["system_config"] = cfg.system_config;
  json w;
  if (!cfg.trace.empty()) w["trace"] = cfg.trace;
  w["loop"] = cfg.loop;
  if (!cfg.microbench_kind.empty()) {
    w["microbenchmark"] = {{"kind", cfg.microbench_kind},
                           {"payload_mib", cfg.microbench_payload >> 20}};
  }
  j["workload"] = w;
  j["output"] = {{"dir", cfg.out_dir}};
  j["seed"] = cfg.seed;
  return j.dump(2) + "\n";
}

std::string config_hash(const RunConfig& cfg) {
  return to_hex(fnv1a(serialize_config(cfg)));
}

Topology make_topology(const RunConfig& cfg) {
  return build_torus(cfg.dims_l, cfg.dims_v, cfg.dims_h, cfg.links);
}

SystemConfig make_system(const RunConfig& cfg) {
  return make_system_config(system_kind_from(cfg.system_config), cfg.endpoint, cfg.ace,
                            cfg.chunk_bytes, cfg.message_bytes);
}

}  // namespace collfab
