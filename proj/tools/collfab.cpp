/******************************************************************************
This source code is licensed under the MIT license found in the
LICENSE file in the root directory of this source tree.
*******************************************************************************/

#include <atomic>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <set>
#include <sstream>
#include <thread>

#include <CLI11.hpp>

#include "collfab/config.hpp"

namespace fs = std::filesystem;
using namespace collfab;

namespace {

constexpr int kExitConfigError = 2;
constexpr int kExitDeadlock = 3;

Workload resolve_trace(const RunConfig& cfg) {
  if (cfg.trace.rfind("builtin:", 0) == 0) return bundled_trace(cfg.trace.substr(8));
  return load_trace(cfg.trace);
}

void dump_schedules(const RunConfig& cfg, const Topology& topo, const fs::path& dir) {
  // one dump per distinct collective shape used by the run
  std::set<std::pair<CollectiveKind, Bytes>> shapes;
  if (!cfg.microbench_kind.empty()) {
    shapes.insert({cfg.microbench_kind == "all_to_all" ? CollectiveKind::AllToAll
                                                       : CollectiveKind::AllReduce,
                   std::min(cfg.microbench_payload, cfg.chunk_bytes)});
  } else {
    const Workload w = resolve_trace(cfg);
    for (const auto& l : w.layers) {
      if (l.comm_bytes == 0) continue;
      shapes.insert({l.comm_kind, std::min(l.comm_bytes, cfg.chunk_bytes)});
    }
  }
  int idx = 0;
  for (const auto& [kind, bytes] : shapes) {
    const CollectiveSchedule sched =
        kind == CollectiveKind::AllToAll
            ? plan_direct_all_to_all(topo, bytes, cfg.message_bytes)
            : plan_hierarchical_all_reduce(topo, bytes, cfg.message_bytes, false);
    std::ofstream out(dir / ("schedule_" + std::to_string(idx++) + "_" +
                             std::string(to_string(kind)) + "_" + std::to_string(bytes) + "B.jsonl"));
    out << sched.dump_jsonl();
  }
}

RunMetrics execute_run(const RunConfig& cfg, const Topology& topo) {
  const SystemConfig sys = make_system(cfg);
  if (!cfg.microbench_kind.empty()) {
    const CollectiveKind kind = cfg.microbench_kind == "all_to_all" ? CollectiveKind::AllToAll
                                                                    : CollectiveKind::AllReduce;
    return run_microbenchmark(kind, cfg.microbench_payload, sys, topo);
  }
  const Workload w = resolve_trace(cfg);
  if (cfg.loop == "dlrm_optimized") return run_dlrm_optimized(w, sys, topo);
  return run_training(w, sys, topo);
}

void write_outputs(const RunConfig& cfg, const RunMetrics& m, const fs::path& out_dir) {
  fs::create_directories(out_dir);
  ReportContext ctx;
  ctx.config_hash = config_hash(cfg);
  ctx.seed = cfg.seed;
  ctx.system_config = cfg.system_config;
  ctx.dims_l = cfg.dims_l;
  ctx.dims_v = cfg.dims_v;
  ctx.dims_h = cfg.dims_h;
  ctx.workload = cfg.trace.empty() ? "microbench:" + cfg.microbench_kind : cfg.trace;
  write_report((out_dir / "report.json").string(), m, ctx);
  write_timeline_csv((out_dir / "timeline.csv").string(), m);
}

int cmd_run(const std::string& config_path, const std::string& out_override, bool dump) {
  RunConfig cfg = parse_config_file(config_path);
  if (!out_override.empty()) cfg.out_dir = out_override;
  const Topology topo = make_topology(cfg);
  const fs::path out_dir(cfg.out_dir);
  fs::create_directories(out_dir);
  if (dump) dump_schedules(cfg, topo, out_dir);
  log_msg(LogLevel::Info, "running " + cfg.system_config + " on " + std::to_string(cfg.dims_l) +
                              "x" + std::to_string(cfg.dims_v) + "x" + std::to_string(cfg.dims_h));
  const RunMetrics m = execute_run(cfg, topo);
  write_outputs(cfg, m, out_dir);
  std::cout << "run complete: " << m.iteration_cycles << " cycles, compute "
            << m.total_compute_cycles << ", exposed " << m.exposed_comm_cycles << ", reports in "
            << out_dir.string() << "\n";
  return 0;
}

struct Axis {
  std::string key;
  std::vector<std::string> values;
};

void apply_axis(RunConfig& cfg, const std::string& key, const std::string& value) {
  if (key == "dims") {
    int l, v, h;
    if (std::sscanf(value.c_str(), "%dx%dx%d", &l, &v, &h) != 3) {
      throw ConfigError("dims axis value must look like 4x4x4, got '" + value + "'");
    }
    cfg.dims_l = l;
    cfg.dims_v = v;
    cfg.dims_h = h;
    return;
  }
  if (key == "system_config") {
    system_kind_from(value);
    cfg.system_config = value;
    return;
  }
  if (key == "endpoint.mem_bw_comm_gbps") {
    cfg.endpoint.mem_bw_comm_gbps = std::stod(value);
    return;
  }
  if (key == "endpoint.sm_comm") {
    cfg.endpoint.sm_comm = std::stoi(value);
    return;
  }
  throw ConfigError("unsupported sweep axis '" + key +
                    "' (supported: dims, system_config, endpoint.mem_bw_comm_gbps, "
                    "endpoint.sm_comm)");
}

int cmd_sweep(const std::string& config_path, const std::vector<std::string>& axis_specs,
              int jobs, const std::string& out_override, bool dump) {
  const RunConfig base = parse_config_file(config_path);
  const std::string out_root = out_override.empty() ? base.out_dir : out_override;

  std::vector<Axis> axes;
  for (const auto& axis_arg : axis_specs) {
    const auto eq = axis_arg.find('=');
    if (eq == std::string::npos) throw ConfigError("--axis expects KEY=V1,V2,...");
    Axis ax;
    ax.key = axis_arg.substr(0, eq);
    std::stringstream ss(axis_arg.substr(eq + 1));
    std::string v;
    while (std::getline(ss, v, ',')) {
      if (!v.empty()) ax.values.push_back(v);
    }
    if (ax.values.empty()) throw ConfigError("axis '" + ax.key + "' has no values");
    axes.push_back(std::move(ax));
  }

  // cartesian product; an empty axis list is a single run
  std::vector<std::vector<std::string>> points{{}};
  for (const auto& ax : axes) {
    std::vector<std::vector<std::string>> next;
    for (const auto& p : points) {
      for (const auto& v : ax.values) {
        auto q = p;
        q.push_back(v);
        next.push_back(std::move(q));
      }
    }
    points = std::move(next);
  }

  fs::create_directories(out_root);
  std::vector<std::string> rows(points.size());
  std::vector<std::string> errors(points.size());

  std::atomic<std::size_t> next_point{0};
  auto worker = [&] {
    for (std::size_t i = next_point.fetch_add(1); i < points.size();
         i = next_point.fetch_add(1)) {
      try {
        RunConfig cfg = base;
        for (std::size_t a = 0; a < axes.size(); a++) apply_axis(cfg, axes[a].key, points[i][a]);
        const fs::path dir = fs::path(out_root) / ("point_" + std::to_string(i));
        cfg.out_dir = dir.string();
        const Topology topo = make_topology(cfg);
        fs::create_directories(dir);
        if (dump) dump_schedules(cfg, topo, dir);
        const RunMetrics m = execute_run(cfg, topo);
        write_outputs(cfg, m, dir);
        std::ostringstream row;
        row << i;
        for (const auto& v : points[i]) row << "," << v;
        row << "," << m.iteration_cycles << "," << m.total_compute_cycles << ","
            << m.exposed_comm_cycles << "," << m.effective_network_gbps;
        rows[i] = row.str();
      } catch (const std::exception& e) {
        errors[i] = e.what();
      }
    }
  };
  std::vector<std::thread> pool;
  const int threads = std::max(1, std::min<int>(jobs, static_cast<int>(points.size())));
  for (int t = 0; t < threads; t++) pool.emplace_back(worker);
  for (auto& th : pool) th.join();

  for (std::size_t i = 0; i < points.size(); i++) {
    if (!errors[i].empty()) {
      std::cerr << "point " << i << " failed: " << errors[i] << "\n";
      return errors[i].find("stalled") != std::string::npos ? kExitDeadlock : kExitConfigError;
    }
  }
  std::ofstream merged(fs::path(out_root) / "sweep.csv");
  merged << "point";
  for (const auto& ax : axes) merged << "," << ax.key;
  merged << ",iteration_cycles,total_compute_cycles,exposed_comm_cycles,effective_network_gbps\n";
  for (const auto& row : rows) merged << row << "\n";
  std::cout << points.size() << " sweep points complete, merged CSV in " << out_root
            << "/sweep.csv\n";
  return 0;
}

int cmd_oracle_check(int max_nodes) {
  const OracleCheckResult r = run_oracle_check(max_nodes, 50);
  if (r.ok) {
    std::cout << "oracle check passed: " << r.cases << " cases\n";
    return 0;
  }
  std::cerr << "oracle check FAILED after " << r.cases << " cases\n  " << r.counterexample
            << "\n";
  return 1;
}

int cmd_validate(const std::string& config_path) {
  const RunConfig cfg = parse_config_file(config_path);
  make_topology(cfg);
  make_system(cfg);
  if (!cfg.trace.empty()) resolve_trace(cfg);
  std::cout << serialize_config(cfg);
  std::cout << "config ok, hash " << config_hash(cfg) << "\n";
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"collfab: collective-communication fabric simulator"};
  app.require_subcommand(1);

  std::string config_path, out_dir;
  bool dump_sched = false;
  int jobs = 1, max_nodes = 16;
  std::vector<std::string> axis_specs;

  auto* run = app.add_subcommand("run", "execute one simulation");
  run->add_option("--config", config_path, "config file (JSON with comments)")->required();
  run->add_option("--out", out_dir, "output directory override");
  run->add_flag("--dump-schedule", dump_sched, "dump per-chunk step schedules (JSON lines)");

  auto* sweep = app.add_subcommand("sweep", "cartesian sweep over config axes");
  sweep->add_option("--config", config_path, "config file")->required();
  sweep->add_option("--axis", axis_specs, "axis KEY=V1,V2,... (repeatable)");
  sweep->add_option("--jobs", jobs, "worker threads")->default_val(1);
  sweep->add_option("--out", out_dir, "output directory override");
  sweep->add_flag("--dump-schedule", dump_sched, "dump schedules per point");

  auto* oracle = app.add_subcommand("oracle-check", "schedule-vs-definition equivalence suite");
  oracle->add_option("--max-nodes", max_nodes, "largest topology node count")->default_val(16);
  oracle->add_flag("--dump-schedule", dump_sched, "accepted for interface symmetry");

  auto* validate = app.add_subcommand("validate", "parse and echo a config");
  validate->add_option("--config", config_path, "config file")->required();
  validate->add_flag("--dump-schedule", dump_sched, "accepted for interface symmetry");

  CLI11_PARSE(app, argc, argv);

  try {
    if (run->parsed()) return cmd_run(config_path, out_dir, dump_sched);
    if (sweep->parsed()) return cmd_sweep(config_path, axis_specs, jobs, out_dir, dump_sched);
    if (oracle->parsed()) return cmd_oracle_check(max_nodes);
    if (validate->parsed()) return cmd_validate(config_path);
  } catch (const DeadlockError& e) {
    std::cerr << "deadlock: " << e.what() << "\n";
    return kExitDeadlock;
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return kExitConfigError;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
