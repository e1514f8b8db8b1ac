/******************************************************************************
This source code is licensed under the MIT license found in the
LICENSE file in the root directory of this source tree.
*******************************************************************************/

#ifndef COLLFAB_COMMON_HPP
#define COLLFAB_COMMON_HPP

#include <cstdint>
#include <stdexcept>
#include <string>

namespace collfab {

using Cycles = std::uint64_t;
using Bytes = std::uint64_t;

// One global clock domain. Link/bus/memory rates are converted from GB/s
// (1e9 bytes per second) into milli-bytes per cycle so that all time
// arithmetic stays integral and runs are bit-reproducible.
constexpr std::uint64_t kClockHz = 1'245'000'000;  // 1245 MHz
constexpr Bytes kPacketBytes = 256;

inline std::uint64_t ceil_div(std::uint64_t a, std::uint64_t b) {
  return (a + b - 1) / b;
}

// gbps and efficiency arrive as decimals from config files; they are scaled
// to integers before the division so two platforms cannot round differently.
inline std::uint64_t milli_bytes_per_cycle(double gbps, double efficiency) {
  const auto gbps_u = static_cast<std::uint64_t>(gbps * 1e6 + 0.5);
  const auto eff_u = static_cast<std::uint64_t>(efficiency * 1e6 + 0.5);
  return gbps_u * eff_u / kClockHz;
}

inline double gbps_from_bytes_per_cycle(double bytes_per_cycle) {
  return bytes_per_cycle * static_cast<double>(kClockHz) / 1e9;
}

struct ConfigError : std::runtime_error {
  explicit ConfigError(const std::string& msg) : std::runtime_error(msg) {}
};

struct ScheduleError : std::runtime_error {
  explicit ScheduleError(const std::string& msg) : std::runtime_error(msg) {}
};

// Raised by the engine when pending steps can never become ready. Carries a
// human-readable listing of the blocked steps for the CLI diagnostic.
struct DeadlockError : std::runtime_error {
  explicit DeadlockError(const std::string& msg) : std::runtime_error(msg) {}
};

// FNV-1a, used for config hashes recorded in reports.
inline std::uint64_t fnv1a(const std::string& data) {
  std::uint64_t h = 1469598103934665603ull;
  for (unsigned char c : data) {
    h ^= c;
    h *= 1099511628211ull;
  }
  return h;
}

std::string to_hex(std::uint64_t v);

// Log level is read from the COLLFAB_LOG environment variable
// (error|warn|info|debug). Default is warn.
enum class LogLevel { Error = 0, Warn = 1, Info = 2, Debug = 3 };
LogLevel log_level();
void log_msg(LogLevel level, const std::string& msg);

}  // namespace collfab

#endif
