/******************************************************************************
This source code is licensed under the MIT license found in the
LICENSE file in the root directory of this source tree.
*******************************************************************************/

#ifndef COLLFAB_CONFIG_HPP
#define COLLFAB_CONFIG_HPP

#include <string>

#include "collfab/analytics.hpp"

namespace collfab {

// One run's complete configuration. Defaults mirror the reference system:
// 4x4x4 torus, 200/25 GB/s links, 900 GB/s memory, 80 SMs, 4 MiB SRAM ACE.
// Config files are JSON with // and /* */ comments allowed; unknown keys are
// rejected.
struct RunConfig {
  TorusParams links;
  int dims_l = 4, dims_v = 4, dims_h = 4;

  ResourceBudget endpoint;  // mem_bw_comm_gbps / sm_comm < 0 = use system preset
  AceConfig ace;
  Bytes chunk_bytes = 64ull << 10;
  Bytes message_bytes = 8ull << 10;

  std::string system_config = "ace";

  // workload: a builtin trace name ("builtin:resnet50"), a trace file path,
  // or a microbenchmark
  std::string trace;
  std::string loop = "default";  // "default" or "dlrm_optimized"
  std::string microbench_kind;   // "all_reduce" or "all_to_all" when set
  Bytes microbench_payload = 0;

  std::string out_dir = "out";
  std::uint64_t seed = 1;

  RunConfig() {
    endpoint.mem_bw_comm_gbps = -1.0;
    endpoint.sm_comm = -1;
  }
};

RunConfig parse_config_text(const std::string& text);
RunConfig parse_config_file(const std::string& path);
std::string serialize_config(const RunConfig& cfg);  // canonical JSON
std::string config_hash(const RunConfig& cfg);

Topology make_topology(const RunConfig& cfg);
SystemConfig make_system(const RunConfig& cfg);

}  // namespace collfab

#endif
