#pragma once

#include <chrono>
#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

#include "mgcp/error.hpp"
#include "mgcp/tensor.hpp"

namespace mgcp {

enum class Phase { Als, Setup, Fmg, Solve, Rebuild };

inline std::string_view to_string(Phase p) {
  switch (p) {
    case Phase::Als: return "als";
    case Phase::Setup: return "setup";
    case Phase::Fmg: return "fmg";
    case Phase::Solve: return "solve";
    case Phase::Rebuild: return "rebuild";
  }
  return "?";
}

inline Phase phase_from_string(std::string_view s) {
  if (s == "als") return Phase::Als;
  if (s == "setup") return Phase::Setup;
  if (s == "fmg") return Phase::Fmg;
  if (s == "solve") return Phase::Solve;
  if (s == "rebuild") return Phase::Rebuild;
  throw InvalidArgument("unknown phase '" + std::string(s) + "'");
}

enum class Outcome { Converged, IterationLimit, Error };

inline std::string_view to_string(Outcome o) {
  switch (o) {
    case Outcome::Converged: return "converged";
    case Outcome::IterationLimit: return "iteration-limit";
    case Outcome::Error: return "error";
  }
  return "?";
}

/// One iteration (ALS sweep or multilevel cycle), or an operator rebuild.
/// `seconds` and `work_units` are cumulative; neither includes evaluation of
/// the stopping criterion. A rebuild record repeats the number of the last
/// completed cycle and is not an iteration.
struct TraceRecord {
  Phase phase = Phase::Als;
  Index cycle = 0;
  double grad_norm = 0.0;
  double objective = 0.0;
  double seconds = 0.0;
  double work_units = 0.0;
};

struct ConvergenceTrace {
  std::vector<TraceRecord> records;
  Outcome outcome = Outcome::IterationLimit;
  std::uint64_t seed = 0;
  double initial_grad_norm = 0.0;
  std::string error_message;

  Index iterations() const noexcept {
    Index n = 0;
    for (const auto& r : records) n += r.phase != Phase::Rebuild;
    return n;
  }
  double total_seconds() const noexcept { return records.empty() ? 0.0 : records.back().seconds; }
  double final_grad_norm() const noexcept {
    return records.empty() ? initial_grad_norm : records.back().grad_norm;
  }
};

/// Instrumentation shared by the multilevel phases.
struct Counters {
  /// ALS/BNGS sweep equivalents, each weighted by its level's storage size
  /// relative to the finest tensor.
  double work_units = 0.0;
  /// Normalize-and-sort applications per level index (coarse entries stay 0).
  std::vector<Index> normalizations_by_level;
  Index setup_cycles = 0;
  Index stagnation_checks = 0;
  Index first_stagnation_check_cycle = 0;
  Index solve_stagnation_signals = 0;
  Index operator_rebuilds = 0;

  void add_normalizations(Index level, Index count) {
    if (normalizations_by_level.size() <= level) normalizations_by_level.resize(level + 1, 0);
    normalizations_by_level[level] += count;
  }
};

/// Accumulates wall time over explicitly timed sections only.
class SectionTimer {
 public:
  using Clock = std::chrono::steady_clock;

  void start() { begin_ = Clock::now(); }
  void stop() { total_ += std::chrono::duration<double>(Clock::now() - begin_).count(); }
  double seconds() const noexcept { return total_; }

 private:
  Clock::time_point begin_{};
  double total_ = 0.0;
};

}  // namespace mgcp
