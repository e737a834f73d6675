#pragma once

// Batch experiments: a JSON plan names tests (problem, rank, variants, seeds,
// solver overrides); run_plan executes every (test, variant, seed) and writes
//   <out>/traces/<test>__<variant>__seed<k>.csv
//   <out>/summary.csv, <out>/summary.json
//
// Config precedence, lowest to highest: built-in defaults, plan "config",
// test "config", caller overrides (the CLI flags).
//
// Summary statistics follow the usual protocol: averages over successful runs
// only; the speedup of a multilevel variant is the mean over seeds where both
// it and ALS succeeded of t_ALS / t_ML. A statistic with no contributing runs
// is absent (null / empty cell), never zero.

#include <algorithm>
#include <atomic>
#include <filesystem>
#include <fstream>
#include <functional>
#include <map>
#include <mutex>
#include <optional>
#include <thread>

#include "json.hpp"
#include "mgcp/driver.hpp"
#include "mgcp/io.hpp"
#include "mgcp/problems.hpp"

namespace mgcp {

using json = nlohmann::json;

enum class Variant { Als, Multilevel, MultilevelFmg };

inline std::string_view to_string(Variant v) {
  switch (v) {
    case Variant::Als: return "als";
    case Variant::Multilevel: return "multilevel";
    case Variant::MultilevelFmg: return "multilevel+fmg";
  }
  return "?";
}

inline Variant variant_from_string(std::string_view s) {
  if (s == "als") return Variant::Als;
  if (s == "multilevel" || s == "ml") return Variant::Multilevel;
  if (s == "multilevel+fmg" || s == "ml+fmg") return Variant::MultilevelFmg;
  throw InvalidArgument("unknown variant '" + std::string(s) + "'");
}

struct ProblemSpec {
  enum class Kind { Laplacian, InverseNorm, File };
  Kind kind = Kind::Laplacian;
  LaplacianSpec laplacian;
  InverseNormSpec inverse_norm;
  std::filesystem::path path;
  TensorFormat format = TensorFormat::Auto;

  AnyTensor build() const {
    switch (kind) {
      case Kind::Laplacian: return laplacian_tensor(laplacian);
      case Kind::InverseNorm: return inverse_norm_tensor(inverse_norm);
      case Kind::File: return load_tensor(path, format);
    }
    throw InvalidArgument("unknown problem kind");
  }

  std::string describe() const {
    switch (kind) {
      case Kind::Laplacian:
        return "laplacian d=" + std::to_string(laplacian.d) + " s=" + std::to_string(laplacian.s);
      case Kind::InverseNorm: return "inverse_norm s=" + std::to_string(inverse_norm.s);
      case Kind::File: return "file " + path.string();
    }
    return "?";
  }
};

struct TestSpec {
  std::string name;
  ProblemSpec problem;
  std::vector<Variant> variants;
  std::vector<std::uint64_t> seeds;
  /// Fully resolved; rank set, use_fmg and rng_seed filled in per run.
  SolverConfig config;
};

struct ExperimentPlan {
  std::string name = "plan";
  std::vector<TestSpec> tests;
  std::optional<std::filesystem::path> out_dir;
  Index jobs = 1;

  void validate() const {
    if (tests.empty()) throw InvalidArgument("plan has no tests");
    std::vector<std::string> names;
    for (const auto& t : tests) {
      if (t.name.empty()) throw InvalidArgument("test without a name");
      if (t.name.find_first_of("/\\") != std::string::npos)
        throw InvalidArgument("test name '" + t.name + "' contains a path separator");
      if (t.seeds.empty()) throw InvalidArgument("test '" + t.name + "' has no seeds");
      if (t.variants.empty()) throw InvalidArgument("test '" + t.name + "' has no variants");
      t.config.validate();
      names.push_back(t.name);
    }
    std::sort(names.begin(), names.end());
    if (std::adjacent_find(names.begin(), names.end()) != names.end())
      throw InvalidArgument("duplicate test names in plan");
  }
};

namespace detail {

template <class T>
void take(const json& j, const char* key, T& dst, std::vector<std::string>& used) {
  if (!j.contains(key)) return;
  used.push_back(key);
  try {
    dst = j.at(key).get<T>();
  } catch (const json::exception& e) {
    throw InvalidArgument(std::string("config key '") + key + "': " + e.what());
  }
}

inline void reject_unknown(const json& j, const std::vector<std::string>& used, const char* where) {
  for (auto it = j.begin(); it != j.end(); ++it)
    if (std::find(used.begin(), used.end(), it.key()) == used.end())
      throw InvalidArgument(std::string("unknown key '") + it.key() + "' in " + where);
}

}  // namespace detail

/// Applies the keys present in `j` on top of `cfg`. Unknown keys are errors.
inline void apply_config(SolverConfig& cfg, const json& j) {
  if (!j.is_object()) throw InvalidArgument("config must be an object");
  std::vector<std::string> used;
  using detail::take;
  take(j, "tol", cfg.tol, used);
  take(j, "max_ml_cycles", cfg.max_ml_cycles, used);
  take(j, "max_als_sweeps", cfg.max_als_sweeps, used);
  take(j, "stagnation_eps", cfg.stagnation_eps, used);
  take(j, "max_setup_cycles", cfg.max_setup_cycles, used);
  take(j, "min_setup_cycles_before_check", cfg.min_setup_cycles_before_check, used);
  take(j, "solve_cycles_before_check", cfg.solve_cycles_before_check, used);
  take(j, "coarsest_size", cfg.coarsest_size, used);
  take(j, "test_blocks", cfg.test_blocks, used);
  if (j.contains("setup")) {
    used.push_back("setup");
    const json& s = j.at("setup");
    std::vector<std::string> u;
    take(s, "nu1", cfg.setup.nu1, u);
    take(s, "nu2", cfg.setup.nu2, u);
    take(s, "nu_c", cfg.setup.nu_c, u);
    take(s, "weight_cap", cfg.setup.weight_cap, u);
    take(s, "pinv_threshold", cfg.setup.pinv_threshold, u);
    detail::reject_unknown(s, u, "config.setup");
  }
  if (j.contains("solve")) {
    used.push_back("solve");
    const json& s = j.at("solve");
    std::vector<std::string> u;
    take(s, "nu1", cfg.solve.nu1, u);
    take(s, "nu2", cfg.solve.nu2, u);
    take(s, "nu_c", cfg.solve.nu_c, u);
    take(s, "gs_iters", cfg.solve.gs_iters, u);
    take(s, "fmg_coarse_sweeps", cfg.solve.fmg_coarse_sweeps, u);
    take(s, "pinv_threshold", cfg.solve.pinv_threshold, u);
    detail::reject_unknown(s, u, "config.solve");
  }
  detail::reject_unknown(j, used, "config");
}

inline ProblemSpec parse_problem(const json& j, const std::filesystem::path& base) {
  ProblemSpec p;
  const std::string type = j.at("type").get<std::string>();
  std::vector<std::string> used{"type"};
  if (type == "laplacian") {
    p.kind = ProblemSpec::Kind::Laplacian;
    detail::take(j, "d", p.laplacian.d, used);
    detail::take(j, "s", p.laplacian.s, used);
  } else if (type == "inverse_norm" || type == "inverse-norm") {
    p.kind = ProblemSpec::Kind::InverseNorm;
    detail::take(j, "s", p.inverse_norm.s, used);
  } else if (type == "file") {
    p.kind = ProblemSpec::Kind::File;
    std::string path, format = "auto";
    detail::take(j, "path", path, used);
    detail::take(j, "format", format, used);
    if (path.empty()) throw InvalidArgument("file problem needs a 'path'");
    p.path = std::filesystem::path(path).is_absolute() ? std::filesystem::path(path) : base / path;
    if (format == "sparse")
      p.format = TensorFormat::Sparse;
    else if (format == "dense")
      p.format = TensorFormat::Dense;
    else if (format != "auto")
      throw InvalidArgument("unknown tensor format '" + format + "'");
  } else {
    throw InvalidArgument("unknown problem type '" + type + "'");
  }
  detail::reject_unknown(j, used, "problem");
  return p;
}

inline std::vector<std::uint64_t> parse_seeds(const json& j) {
  std::vector<std::uint64_t> seeds;
  if (j.is_array()) {
    for (const auto& s : j) seeds.push_back(s.get<std::uint64_t>());
  } else if (j.is_object()) {
    const auto first = j.at("first").get<std::uint64_t>();
    const auto count = j.at("count").get<std::uint64_t>();
    for (std::uint64_t k = 0; k < count; ++k) seeds.push_back(first + k);
  } else {
    throw InvalidArgument("seeds must be a list or {\"first\", \"count\"}");
  }
  return seeds;
}

/// `base` resolves relative tensor file paths.
inline ExperimentPlan parse_plan(const json& j, const std::filesystem::path& base = ".") {
  try {
    ExperimentPlan plan;
    if (j.contains("name")) plan.name = j.at("name").get<std::string>();
    if (j.contains("out_dir")) plan.out_dir = j.at("out_dir").get<std::string>();
    if (j.contains("jobs")) plan.jobs = j.at("jobs").get<Index>();
    SolverConfig defaults;
    if (j.contains("config")) apply_config(defaults, j.at("config"));
    for (auto it = j.begin(); it != j.end(); ++it)
      if (it.key() != "name" && it.key() != "out_dir" && it.key() != "jobs" &&
          it.key() != "config" && it.key() != "tests")
        throw InvalidArgument("unknown key '" + it.key() + "' in plan");
    for (const auto& t : j.at("tests")) {
      TestSpec spec;
      spec.name = t.at("name").get<std::string>();
      spec.problem = parse_problem(t.at("problem"), base);
      spec.config = defaults;
      spec.config.rank = t.at("rank").get<Index>();
      if (t.contains("config")) apply_config(spec.config, t.at("config"));
      for (const auto& v : t.at("variants")) spec.variants.push_back(variant_from_string(v.get<std::string>()));
      spec.seeds = parse_seeds(t.at("seeds"));
      for (auto it = t.begin(); it != t.end(); ++it)
        if (it.key() != "name" && it.key() != "problem" && it.key() != "rank" &&
            it.key() != "config" && it.key() != "variants" && it.key() != "seeds")
          throw InvalidArgument("unknown key '" + it.key() + "' in test '" + spec.name + "'");
      plan.tests.push_back(std::move(spec));
    }
    plan.validate();
    return plan;
  } catch (const json::exception& e) {
    throw InvalidArgument(std::string("invalid plan: ") + e.what());
  }
}

inline ExperimentPlan load_plan(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error("cannot open plan '" + path.string() + "'");
  json j;
  try {
    j = json::parse(in);
  } catch (const json::parse_error& e) {
    throw InvalidArgument("plan '" + path.string() + "': " + e.what());
  }
  return parse_plan(j, path.parent_path().empty() ? std::filesystem::path(".") : path.parent_path());
}

struct RunResult {
  std::string test;
  Variant variant = Variant::Als;
  std::uint64_t seed = 0;
  /// False when the run could not be carried out (I/O or setup failure).
  bool executed = false;
  std::string failure;
  Outcome outcome = Outcome::Error;
  double tol = 0.0;
  Index iterations = 0;
  double seconds = 0.0;
  double final_grad_norm = 0.0;
  double work_units = 0.0;
  Index levels = 1;
  std::filesystem::path trace_file;

  bool success() const { return executed && outcome == Outcome::Converged && final_grad_norm < tol; }
};

struct SummaryRow {
  std::string test;
  Variant variant = Variant::Als;
  Index runs = 0;
  Index ns = 0;
  std::optional<double> avg_iterations;
  std::optional<double> avg_seconds;
  std::optional<double> avg_speedup;
  Index speedup_pairs = 0;
  std::optional<Index> levels;

  /// Equality ignoring wall-clock derived fields.
  bool same_counts(const SummaryRow& o) const {
    return test == o.test && variant == o.variant && runs == o.runs && ns == o.ns &&
           avg_iterations == o.avg_iterations && speedup_pairs == o.speedup_pairs &&
           levels == o.levels && avg_speedup.has_value() == o.avg_speedup.has_value();
  }
  bool operator==(const SummaryRow&) const = default;
};

struct PlanSummary {
  std::vector<RunResult> runs;
  std::vector<SummaryRow> rows;

  bool all_executed() const {
    return std::all_of(runs.begin(), runs.end(), [](const RunResult& r) { return r.executed; });
  }
};

inline std::string trace_file_name(const std::string& test, Variant v, std::uint64_t seed) {
  return test + "__" + std::string(to_string(v)) + "__seed" + std::to_string(seed) + ".csv";
}

/// Aggregates runs in plan order (tests, then variants, then seeds as listed).
inline std::vector<SummaryRow> summarize(const ExperimentPlan& plan, const std::vector<RunResult>& runs) {
  std::map<std::tuple<std::string, Variant, std::uint64_t>, const RunResult*> index;
  for (const auto& r : runs) index[{r.test, r.variant, r.seed}] = &r;
  auto find = [&](const std::string& t, Variant v, std::uint64_t s) -> const RunResult* {
    auto it = index.find({t, v, s});
    return it == index.end() ? nullptr : it->second;
  };

  std::vector<SummaryRow> rows;
  for (const auto& test : plan.tests) {
    for (Variant v : test.variants) {
      SummaryRow row;
      row.test = test.name;
      row.variant = v;
      double it_sum = 0.0, t_sum = 0.0, spd_sum = 0.0;
      for (std::uint64_t seed : test.seeds) {
        const RunResult* r = find(test.name, v, seed);
        if (!r) continue;
        ++row.runs;
        if (r->executed && v != Variant::Als) row.levels = r->levels;
        if (!r->success()) continue;
        ++row.ns;
        it_sum += static_cast<double>(r->iterations);
        t_sum += r->seconds;
        if (v == Variant::Als) continue;
        const RunResult* base = find(test.name, Variant::Als, seed);
        // A zero-time multilevel run (converged at the initial guess) has no ratio.
        if (base && base->success() && r->seconds > 0.0) {
          spd_sum += base->seconds / r->seconds;
          ++row.speedup_pairs;
        }
      }
      if (row.ns > 0) {
        row.avg_iterations = it_sum / static_cast<double>(row.ns);
        row.avg_seconds = t_sum / static_cast<double>(row.ns);
      }
      if (row.speedup_pairs > 0) row.avg_speedup = spd_sum / static_cast<double>(row.speedup_pairs);
      rows.push_back(row);
    }
  }
  return rows;
}

inline void write_summary_csv(std::ostream& out, const std::vector<SummaryRow>& rows) {
  auto opt = [](const auto& o) { return o ? format_double(static_cast<double>(*o)) : std::string(); };
  out << "test,variant,runs,ns,avg_iterations,avg_seconds,avg_speedup,speedup_pairs,levels\n";
  for (const auto& r : rows)
    out << r.test << ',' << to_string(r.variant) << ',' << r.runs << ',' << r.ns << ','
        << opt(r.avg_iterations) << ',' << opt(r.avg_seconds) << ',' << opt(r.avg_speedup) << ','
        << r.speedup_pairs << ',' << (r.levels ? std::to_string(*r.levels) : std::string()) << '\n';
}

inline json summary_to_json(const ExperimentPlan& plan, const PlanSummary& s) {
  auto opt = [](const auto& o) { return o ? json(*o) : json(nullptr); };
  json j;
  j["plan"] = plan.name;
  j["all_executed"] = s.all_executed();
  j["summary"] = json::array();
  for (const auto& r : s.rows)
    j["summary"].push_back({{"test", r.test},
                            {"variant", std::string(to_string(r.variant))},
                            {"runs", r.runs},
                            {"ns", r.ns},
                            {"avg_iterations", opt(r.avg_iterations)},
                            {"avg_seconds", opt(r.avg_seconds)},
                            {"avg_speedup", opt(r.avg_speedup)},
                            {"speedup_pairs", r.speedup_pairs},
                            {"levels", opt(r.levels)}});
  j["runs"] = json::array();
  for (const auto& r : s.runs) {
    json jr = {{"test", r.test},
               {"variant", std::string(to_string(r.variant))},
               {"seed", r.seed},
               {"executed", r.executed},
               {"success", r.success()},
               {"outcome", std::string(to_string(r.outcome))},
               {"iterations", r.iterations},
               {"seconds", r.seconds},
               {"final_grad_norm", r.final_grad_norm},
               {"work_units", r.work_units},
               {"levels", r.levels},
               {"trace", r.trace_file.filename().string()}};
    if (!r.failure.empty()) jr["failure"] = r.failure;
    j["runs"].push_back(std::move(jr));
  }
  return j;
}

namespace detail {

inline RunResult result_from_trace(const std::string& test, Variant v, std::uint64_t seed,
                                   double tol, Index levels, const ConvergenceTrace& trace) {
  RunResult r;
  r.test = test;
  r.variant = v;
  r.seed = seed;
  r.executed = true;
  r.outcome = trace.outcome;
  r.tol = tol;
  r.iterations = trace.iterations();
  r.seconds = trace.total_seconds();
  r.final_grad_norm = trace.final_grad_norm();
  r.work_units = trace.records.empty() ? 0.0 : trace.records.back().work_units;
  r.levels = levels;
  return r;
}

}  // namespace detail

struct RunOptions {
  /// Worker threads; results do not depend on it (timings aside).
  Index jobs = 1;
  /// Called after each finished run (from worker threads, serialized).
  std::function<void(const RunResult&)> progress;
};

inline PlanSummary run_plan(const ExperimentPlan& plan, const std::filesystem::path& out_dir,
                            const RunOptions& ropts = {}) {
  plan.validate();
  namespace fs = std::filesystem;
  const fs::path trace_dir = out_dir / "traces";
  fs::create_directories(trace_dir);

  struct Job {
    const TestSpec* test;
    Variant variant;
    std::uint64_t seed;
  };
  std::vector<Job> jobs;
  for (const auto& t : plan.tests)
    for (Variant v : t.variants)
      for (std::uint64_t s : t.seeds) jobs.push_back({&t, v, s});

  // Tensors are built once per test and shared read-only by its jobs.
  std::vector<std::optional<AnyTensor>> tensors(plan.tests.size());
  std::vector<std::string> build_errors(plan.tests.size());
  for (Index i = 0; i < plan.tests.size(); ++i) {
    try {
      tensors[i] = plan.tests[i].problem.build();
    } catch (const std::exception& e) {
      build_errors[i] = e.what();
    }
  }

  std::vector<RunResult> results(jobs.size());
  std::mutex progress_mutex;
  auto run_job = [&](Index k) {
    const Job& job = jobs[k];
    const Index ti = static_cast<Index>(job.test - plan.tests.data());
    RunResult& r = results[k];
    r.test = job.test->name;
    r.variant = job.variant;
    r.seed = job.seed;
    r.tol = job.test->config.tol;
    r.trace_file = trace_dir / trace_file_name(job.test->name, job.variant, job.seed);
    try {
      if (!tensors[ti]) throw Error("cannot build problem: " + build_errors[ti]);
      SolverConfig cfg = job.test->config;
      cfg.rng_seed = job.seed;
      cfg.use_fmg = job.variant == Variant::MultilevelFmg;
      const SolveResult sr = job.variant == Variant::Als ? solve_als_baseline(*tensors[ti], cfg)
                                                         : solve_multilevel(*tensors[ti], cfg);
      const Index levels = job.variant == Variant::Als ? 1 : sr.levels;
      save_trace(r.trace_file, sr.trace,
                 {{"test", r.test},
                  {"variant", std::string(to_string(r.variant))},
                  {"problem", job.test->problem.describe()},
                  {"rank", std::to_string(cfg.rank)},
                  {"tol", format_double(cfg.tol)},
                  {"levels", std::to_string(levels)}});
      const fs::path file = r.trace_file;
      r = detail::result_from_trace(r.test, r.variant, r.seed, cfg.tol, levels, sr.trace);
      r.trace_file = file;
    } catch (const std::exception& e) {
      r.executed = false;
      r.failure = e.what();
    }
    if (ropts.progress) {
      std::lock_guard lock(progress_mutex);
      ropts.progress(r);
    }
  };

  const Index workers = std::max<Index>(1, std::min<Index>(ropts.jobs, jobs.size()));
  if (workers == 1) {
    for (Index k = 0; k < jobs.size(); ++k) run_job(k);
  } else {
    std::atomic<Index> next{0};
    std::vector<std::jthread> pool;
    for (Index w = 0; w < workers; ++w)
      pool.emplace_back([&] {
        for (Index k; (k = next++) < jobs.size();) run_job(k);
      });
  }

  PlanSummary summary;
  summary.runs = std::move(results);
  summary.rows = summarize(plan, summary.runs);
  {
    std::ofstream csv(out_dir / "summary.csv");
    write_summary_csv(csv, summary.rows);
    if (!csv) throw Error("cannot write summary.csv in '" + out_dir.string() + "'");
  }
  {
    std::ofstream js(out_dir / "summary.json");
    js << summary_to_json(plan, summary).dump(2) << '\n';
    if (!js) throw Error("cannot write summary.json in '" + out_dir.string() + "'");
  }
  return summary;
}

/// Rebuilds the summary from the trace files a previous run_plan left in
/// `out_dir`. Missing trace files count as runs that were not executed.
inline PlanSummary summarize_traces(const ExperimentPlan& plan, const std::filesystem::path& out_dir) {
  PlanSummary s;
  for (const auto& t : plan.tests)
    for (Variant v : t.variants)
      for (std::uint64_t seed : t.seeds) {
        const auto file = out_dir / "traces" / trace_file_name(t.name, v, seed);
        if (!std::filesystem::exists(file)) {
          RunResult r;
          r.test = t.name;
          r.variant = v;
          r.seed = seed;
          r.failure = "missing trace";
          s.runs.push_back(r);
          continue;
        }
        const TraceFile tf = load_trace(file);
        double tol = t.config.tol;
        Index levels = 1;
        if (auto it = tf.meta.find("tol"); it != tf.meta.end())
          std::from_chars(it->second.data(), it->second.data() + it->second.size(), tol);
        if (auto it = tf.meta.find("levels"); it != tf.meta.end()) levels = std::stoull(it->second);
        RunResult r = detail::result_from_trace(t.name, v, seed, tol, levels, tf.trace);
        r.trace_file = file;
        s.runs.push_back(r);
      }
  s.rows = summarize(plan, s.runs);
  return s;
}

}  // namespace mgcp
