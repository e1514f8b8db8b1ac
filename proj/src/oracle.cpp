/******************************************************************************
This source code is licensed under the MIT license found in the
LICENSE file in the root directory of this source tree.
*******************************************************************************/

#include <cassert>
#include <deque>

#include "collfab/collectives.hpp"

namespace collfab {

// Executes the schedule functionally on integer vectors. Integer arithmetic
// keeps the reduction exactly associative, so any topological order yields
// the same result.
std::vector<std::vector<std::int64_t>> execute_oracle(
    const CollectiveSchedule& schedule, const std::vector<std::vector<std::int64_t>>& initial) {
  schedule.validate();
  const std::size_t elems = schedule.plan.padded_bytes / kOracleElemBytes;
  if (initial.size() != static_cast<std::size_t>(schedule.node_count)) {
    throw ScheduleError("oracle: expected one initial vector per node");
  }
  for (const auto& v : initial) {
    if (v.size() != elems) {
      throw ScheduleError("oracle: initial vectors must have padded length " +
                          std::to_string(elems));
    }
  }

  std::vector<std::vector<std::int64_t>> state = initial;
  // payload snapshot captured by each send, keyed by pair id
  std::vector<std::vector<std::int64_t>> wire(schedule.pair_count);

  std::vector<std::uint32_t> pending(schedule.steps.size(), 0);
  std::vector<std::vector<std::uint32_t>> dependents(schedule.steps.size());
  std::deque<std::uint32_t> ready;
  for (std::uint32_t i = 0; i < schedule.steps.size(); i++) {
    pending[i] = schedule.dep_start[i + 1] - schedule.dep_start[i];
    for (std::uint32_t e = schedule.dep_start[i]; e < schedule.dep_start[i + 1]; e++) {
      dependents[schedule.dep_edges[e]].push_back(i);
    }
    if (pending[i] == 0) ready.push_back(i);
  }

  while (!ready.empty()) {
    const Step& s = schedule.steps[ready.front()];
    ready.pop_front();
    const std::size_t off = s.range_offset / kOracleElemBytes;
    const std::size_t len = s.bytes / kOracleElemBytes;
    assert(s.range_offset % kOracleElemBytes == 0 && s.bytes % kOracleElemBytes == 0);

    switch (s.kind) {
      case StepKind::SendMsg: {
        if (s.source == SendSource::ForwardedData && s.fwd_of != kNoId) {
          wire[s.pair] = wire[s.fwd_of];
        } else {
          assert(off + len <= elems);
          wire[s.pair].assign(state[s.node].begin() + off, state[s.node].begin() + off + len);
        }
        break;
      }
      case StepKind::RecvMsg:
        // data already sits in wire[s.pair]; the step only gates dependents
        break;
      case StepKind::ReduceLocal: {
        const auto& in = wire[s.pair];
        assert(in.size() == len && off + len <= elems);
        for (std::size_t i = 0; i < len; i++) state[s.node][off + i] += in[i];
        break;
      }
      case StepKind::StoreFinal: {
        if (!s.store_from_reduce) {
          const auto& in = wire[s.pair];
          assert(in.size() == len && off + len <= elems);
          for (std::size_t i = 0; i < len; i++) state[s.node][off + i] = in[i];
        }
        // reduced results already live in state
        break;
      }
      case StepKind::LoadFromMemory:
      case StepKind::WriteToMemory:
        break;
    }
    for (auto d : dependents[s.id]) {
      if (--pending[d] == 0) ready.push_back(d);
    }
  }
  return state;
}

}  // namespace collfab
