#pragma once

// Combined multilevel solver and the standalone ALS baseline.
//
// Multilevel run:
//   1. uniform(0,1) boot factors and n_t test blocks from the seed;
//   2. setup V-cycles until g_new > (1 - eps) g_old (tested from cycle
//      `min_setup_cycles_before_check` on) or `max_setup_cycles`;
//   3. optionally one FMG cycle replacing the boot factors, followed by one
//      operator rebuild down-sweep;
//   4. FAS V-cycles until g < tol. After `solve_cycles_before_check` cycles, the
//      first cycle with g_new >= g_old is discarded and the operators are
//      rebuilt from the previous iterate; later signals are ignored.

#include <cstdint>
#include <random>

#include "mgcp/fas.hpp"

namespace mgcp {

struct SolverConfig {
  Index rank = 1;
  double tol = 1e-10;
  Index max_ml_cycles = 500;
  Index max_als_sweeps = 10000;
  double stagnation_eps = 0.1;
  Index max_setup_cycles = 5;
  Index min_setup_cycles_before_check = 3;
  Index solve_cycles_before_check = 5;
  bool use_fmg = false;
  /// 0 selects max(R, 3).
  Index coarsest_size = 0;
  /// 0 selects 2 for R > 1 and 3 for R = 1.
  Index test_blocks = 0;
  SetupOptions setup;
  FasOptions solve;
  std::uint64_t rng_seed = 0;

  void validate() const {
    if (rank < 1) throw InvalidArgument("rank must be >= 1");
    if (!(tol > 0.0)) throw InvalidArgument("tolerance must be positive");
    if (!(stagnation_eps > 0.0 && stagnation_eps < 1.0))
      throw InvalidArgument("stagnation epsilon must lie in (0, 1)");
    if (max_setup_cycles < 1) throw InvalidArgument("at least one setup cycle is required");
    solve.validate();
  }

  Index num_test_blocks() const { return test_blocks ? test_blocks : default_test_blocks(rank); }
};

struct SolveResult {
  FactorSet factors;
  ConvergenceTrace trace;
  Counters counters;
  Index levels = 1;
};

/// Seeded initial state. The boot factors are drawn first, so the ALS baseline
/// and the multilevel run start from bit-identical factors for a given seed.
struct InitialGuess {
  std::mt19937_64 rng;
  FactorSet boot;
  TestBlocks blocks;
};

inline InitialGuess initial_guess(const Shape& shape, const SolverConfig& cfg) {
  InitialGuess g{std::mt19937_64(cfg.rng_seed), {}, {}};
  g.boot = FactorSet::random_uniform(shape, cfg.rank, g.rng);
  for (Index b = 0; b < cfg.num_test_blocks(); ++b)
    g.blocks.push_back(FactorSet::random_uniform(shape, cfg.rank, g.rng));
  return g;
}

namespace detail {

class TraceRecorder {
 public:
  TraceRecorder(const AnyTensor& z, ConvergenceTrace& trace, const Counters& counters)
      : z_(z), trace_(trace), counters_(counters) {}

  SectionTimer timer;

  double record(Phase phase, const FactorSet& f) {
    TraceRecord rec;
    rec.phase = phase;
    rec.cycle = trace_.iterations() + (phase == Phase::Rebuild ? 0 : 1);
    rec.grad_norm = grad_norm(z_, f);
    rec.objective = objective(z_, f);
    rec.seconds = timer.seconds();
    rec.work_units = counters_.work_units;
    trace_.records.push_back(rec);
    return rec.grad_norm;
  }

 private:
  const AnyTensor& z_;
  ConvergenceTrace& trace_;
  const Counters& counters_;
};

}  // namespace detail

inline SolveResult solve_multilevel(const AnyTensor& z, const SolverConfig& cfg) {
  cfg.validate();
  const Shape& shape = shape_of(z);
  SolveResult res;
  res.trace.seed = cfg.rng_seed;
  InitialGuess init = initial_guess(shape, cfg);
  res.factors = init.boot;
  Hierarchy h = Hierarchy::plan(z, cfg.rank, HierarchyOptions{cfg.coarsest_size});
  res.levels = h.depth();
  Counters& c = res.counters;
  detail::TraceRecorder rec(z, res.trace, c);
  auto& timer = rec.timer;

  try {
    res.trace.initial_grad_norm = grad_norm(z, init.boot);
    if (res.trace.initial_grad_norm < cfg.tol) {
      res.trace.outcome = Outcome::Converged;
      return res;
    }

    double g_old = res.trace.initial_grad_norm;
    for (Index cycle = 1; cycle <= cfg.max_setup_cycles; ++cycle) {
      timer.start();
      setup_vcycle(h, init.boot, init.blocks, cycle == 1, cfg.setup, &c);
      timer.stop();
      ++c.setup_cycles;
      res.factors = init.boot;
      const double g_new = rec.record(Phase::Setup, init.boot);
      if (g_new < cfg.tol) {
        res.trace.outcome = Outcome::Converged;
        return res;
      }
      if (cycle >= cfg.min_setup_cycles_before_check) {
        if (c.stagnation_checks++ == 0) c.first_stagnation_check_cycle = cycle;
        if (g_new > (1.0 - cfg.stagnation_eps) * g_old) break;
      }
      g_old = g_new;
    }

    if (cfg.use_fmg) {
      timer.start();
      init.boot = fmg_cycle(h, cfg.solve, init.rng, &c);
      rebuild_downsweep(h, init.boot, init.blocks, cfg.setup, &c);
      timer.stop();
      res.factors = init.boot;
      if (rec.record(Phase::Fmg, init.boot) < cfg.tol) {
        res.trace.outcome = Outcome::Converged;
        return res;
      }
    }

    FactorSet current = init.boot;
    double g_cur = grad_norm(z, current);
    bool rebuilt = false;
    const RhsSet zero = RhsSet::zeros_like(current);
    for (Index k = 1; k <= cfg.max_ml_cycles; ++k) {
      timer.start();
      FactorSet next = fas_vcycle(h, 0, current, zero, cfg.solve, &c);
      timer.stop();
      const double g_next = grad_norm(z, next);
      if (k > cfg.solve_cycles_before_check && g_next >= g_cur) {
        ++c.solve_stagnation_signals;
        if (!rebuilt) {
          rebuilt = true;
          ++c.operator_rebuilds;
          timer.start();
          rebuild_downsweep(h, current, init.blocks, cfg.setup, &c);
          timer.stop();
          rec.record(Phase::Rebuild, current);
          continue;
        }
      }
      current = std::move(next);
      res.factors = current;
      g_cur = rec.record(Phase::Solve, current);
      if (g_cur < cfg.tol) {
        res.trace.outcome = Outcome::Converged;
        return res;
      }
    }
    res.trace.outcome = Outcome::IterationLimit;
  } catch (const Error& e) {
    res.trace.outcome = Outcome::Error;
    res.trace.error_message = e.what();
  }
  return res;
}

/// Standalone ALS from the same seeded boot factors as solve_multilevel.
inline SolveResult solve_als_baseline(const AnyTensor& z, const SolverConfig& cfg) {
  cfg.validate();
  SolveResult res;
  InitialGuess init = initial_guess(shape_of(z), cfg);
  res.factors = init.boot;
  AlsOptions opts;
  opts.max_sweeps = cfg.max_als_sweeps;
  opts.tol = cfg.tol;
  opts.normalize = true;
  opts.pinv_threshold = cfg.solve.pinv_threshold;
  try {
    auto out = als_solve(z, init.boot, opts);
    res.factors = std::move(out.factors);
    res.trace = std::move(out.trace);
  } catch (const Error& e) {
    res.trace.outcome = Outcome::Error;
    res.trace.error_message = e.what();
  }
  res.trace.seed = cfg.rng_seed;
  res.counters.work_units = static_cast<double>(res.trace.iterations());
  return res;
}

}  // namespace mgcp
