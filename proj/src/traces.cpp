/******************************************************************************
This source code is licensed under the MIT license found in the
LICENSE file in the root directory of this source tree.
*******************************************************************************/

#include <fstream>
#include <sstream>

#include <json.hpp>

#include "collfab/workload.hpp"

namespace collfab {

using json = nlohmann::ordered_json;

namespace {

const char* trigger_name(CommTrigger t) {
  switch (t) {
    case CommTrigger::None:
      return "none";
    case CommTrigger::AfterWeightGrad:
      return "after_weight_grad";
    case CommTrigger::FwdEmbedding:
      return "fwd_embedding";
  }
  return "?";
}

CommTrigger trigger_from(const std::string& s, int line) {
  if (s == "none") return CommTrigger::None;
  if (s == "after_weight_grad") return CommTrigger::AfterWeightGrad;
  if (s == "fwd_embedding") return CommTrigger::FwdEmbedding;
  throw ConfigError("trace line " + std::to_string(line) + ": unknown trigger '" + s + "'");
}

CollectiveKind kind_from(const std::string& s, int line) {
  if (s == "all_reduce") return CollectiveKind::AllReduce;
  if (s == "all_to_all") return CollectiveKind::AllToAll;
  if (s == "reduce_scatter") return CollectiveKind::ReduceScatter;
  if (s == "all_gather") return CollectiveKind::AllGather;
  if (s == "none") return CollectiveKind::AllReduce;  // unused when bytes == 0
  throw ConfigError("trace line " + std::to_string(line) + ": unknown comm_kind '" + s + "'");
}

json need(const json& j, const char* key, int line) {
  if (!j.contains(key)) {
    throw ConfigError("trace line " + std::to_string(line) + ": missing field '" + key + "'");
  }
  return j.at(key);
}

}  // namespace

int Workload::embedding_layer() const {
  for (std::size_t i = 0; i < layers.size(); i++) {
    if (layers[i].trigger == CommTrigger::FwdEmbedding) return static_cast<int>(i);
  }
  return -1;
}

Cycles Workload::iteration_compute_cycles() const {
  Cycles total = 0;
  for (const auto& l : layers) total += l.fwd_cycles + l.ig_cycles + l.wg_cycles;
  return total;
}

Workload load_trace(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open trace file " + path);
  Workload w;
  std::string line;
  int line_no = 0;
  bool have_header = false;
  while (std::getline(in, line)) {
    line_no++;
    if (line.empty()) continue;
    json j;
    try {
      j = json::parse(line);
    } catch (const json::exception& e) {
      throw ConfigError("trace line " + std::to_string(line_no) + ": " + e.what());
    }
    if (!have_header) {
      w.model = need(j, "model", line_no).get<std::string>();
      w.parallelism = need(j, "parallelism", line_no).get<std::string>();
      w.minibatch = need(j, "minibatch", line_no).get<int>();
      if (w.parallelism != "data" && w.parallelism != "hybrid") {
        throw ConfigError("trace line " + std::to_string(line_no) +
                          ": parallelism must be 'data' or 'hybrid'");
      }
      have_header = true;
      continue;
    }
    Layer l;
    l.name = need(j, "name", line_no).get<std::string>();
    l.fwd_cycles = need(j, "fwd_cycles", line_no).get<Cycles>();
    l.ig_cycles = need(j, "ig_cycles", line_no).get<Cycles>();
    l.wg_cycles = need(j, "wg_cycles", line_no).get<Cycles>();
    l.comm_bytes = need(j, "comm_bytes", line_no).get<Bytes>();
    l.comm_kind = kind_from(need(j, "comm_kind", line_no).get<std::string>(), line_no);
    l.trigger = trigger_from(need(j, "trigger", line_no).get<std::string>(), line_no);
    if (l.comm_bytes > 0 && l.trigger == CommTrigger::None) {
      throw ConfigError("trace line " + std::to_string(line_no) +
                        ": comm_bytes > 0 requires a trigger");
    }
    w.layers.push_back(std::move(l));
  }
  if (!have_header) throw ConfigError("trace file " + path + " is empty");
  return w;
}

void save_trace(const Workload& w, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw ConfigError("cannot write trace file " + path);
  json header;
  header["model"] = w.model;
  header["parallelism"] = w.parallelism;
  header["minibatch"] = w.minibatch;
  out << header.dump() << "\n";
  for (const auto& l : w.layers) {
    json j;
    j["name"] = l.name;
    j["fwd_cycles"] = l.fwd_cycles;
    j["ig_cycles"] = l.ig_cycles;
    j["wg_cycles"] = l.wg_cycles;
    j["comm_kind"] = l.comm_bytes == 0 ? "none" : to_string(l.comm_kind);
    j["comm_bytes"] = l.comm_bytes;
    j["trigger"] = trigger_name(l.trigger);
    out << j.dump() << "\n";
  }
}

namespace {

// Deterministic pseudo-variation; keeps bundled traces byte-stable across
// platforms without touching <random> distributions.
Cycles vary(Cycles base, std::uint64_t i, std::uint64_t salt, Cycles spread) {
  const std::uint64_t x = fnv1a(std::to_string(i * 2654435761ull + salt));
  return base + static_cast<Cycles>(x % (2 * spread + 1)) - spread;
}

Workload make_resnet50_like() {
  Workload w;
  w.model = "resnet50-like";
  w.parallelism = "data";
  w.minibatch = 32;
  // 48 conv/fc layers, many small weight-gradient all-reduces.
  for (int i = 0; i < 48; i++) {
    Layer l;
    l.name = "conv" + std::to_string(i);
    l.fwd_cycles = vary(9000, i, 11, 3000);
    l.ig_cycles = vary(9500, i, 23, 3000);
    l.wg_cycles = vary(9500, i, 37, 3000);
    l.comm_kind = CollectiveKind::AllReduce;
    l.trigger = CommTrigger::AfterWeightGrad;
    // 128 KiB .. ~1.8 MiB gradients, ~32 MiB per iteration in total
    l.comm_bytes = (128ull << 10) + (fnv1a("rn" + std::to_string(i)) % 14) * (128ull << 10);
    w.layers.push_back(std::move(l));
  }
  return w;
}

Workload make_gnmt_like() {
  Workload w;
  w.model = "gnmt-like";
  w.parallelism = "data";
  w.minibatch = 128;
  // fewer, larger layers and collectives
  for (int i = 0; i < 10; i++) {
    Layer l;
    l.name = i < 4 ? "enc_lstm" + std::to_string(i)
             : i < 8 ? "dec_lstm" + std::to_string(i - 4)
                     : (i == 8 ? "attention" : "softmax");
    l.fwd_cycles = vary(48000, i, 51, 9000);
    l.ig_cycles = vary(50000, i, 67, 9000);
    l.wg_cycles = vary(50000, i, 83, 9000);
    l.comm_kind = CollectiveKind::AllReduce;
    l.trigger = CommTrigger::AfterWeightGrad;
    l.comm_bytes = (3ull << 20) + (fnv1a("gn" + std::to_string(i)) % 5) * (512ull << 10);
    w.layers.push_back(std::move(l));
  }
  return w;
}

Workload make_dlrm_like() {
  Workload w;
  w.model = "dlrm-like";
  w.parallelism = "hybrid";
  w.minibatch = 512;
  auto mlp = [&](const std::string& name, int i, Bytes ar_bytes) {
    Layer l;
    l.name = name;
    l.fwd_cycles = vary(26000, i, 97, 6000);
    l.ig_cycles = vary(28000, i, 113, 6000);
    l.wg_cycles = vary(28000, i, 131, 6000);
    l.comm_kind = CollectiveKind::AllReduce;
    l.trigger = CommTrigger::AfterWeightGrad;
    l.comm_bytes = ar_bytes;
    return l;
  };
  for (int i = 0; i < 3; i++) w.layers.push_back(mlp("bot_mlp" + std::to_string(i), i, 1ull << 20));
  // embedding: lookup in fwd, update in wg, all-to-all exchanges fwd and bwd
  Layer emb;
  emb.name = "embedding";
  emb.fwd_cycles = 70000;  // lookup, memory bound
  emb.ig_cycles = 0;
  emb.wg_cycles = 70000;  // update, memory bound
  emb.comm_kind = CollectiveKind::AllToAll;
  emb.trigger = CommTrigger::FwdEmbedding;
  emb.comm_bytes = 1ull << 20;
  w.layers.push_back(std::move(emb));
  for (int i = 0; i < 4; i++) w.layers.push_back(mlp("top_mlp" + std::to_string(i), 10 + i, 3ull << 20));
  return w;
}

}  // namespace

std::vector<std::string> bundled_trace_names() {
  return {"resnet50", "gnmt", "dlrm"};
}

Workload bundled_trace(const std::string& name) {
  if (name == "resnet50" || name == "resnet50-like") return make_resnet50_like();
  if (name == "gnmt" || name == "gnmt-like") return make_gnmt_like();
  if (name == "dlrm" || name == "dlrm-like") return make_dlrm_like();
  throw ConfigError("unknown bundled trace '" + name + "' (known: resnet50, gnmt, dlrm)");
}

}  // namespace collfab
