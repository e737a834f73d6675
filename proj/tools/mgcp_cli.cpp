// mgcp: experiment runner and tensor utilities.
//
//   mgcp run <plan.json> [--out DIR] [--jobs N] [--seeds 1,2,3] [--variants als,multilevel]
//                        [--tol X] [--max-ml-cycles N] [--max-als-sweeps N] [--coarsest-size N]
//   mgcp gen laplacian --d 2 --s 20 [-o lap.tns]
//   mgcp gen inverse-norm --s 50 [-o ijk.dten]
//   mgcp check <tensor file> [--format sparse|dense] [--rank R] [--seed K]
//
// Output directory: --out, else $MGCP_OUT_DIR, else the plan's out_dir, else ./mgcp-out.
// `run` exits 0 when every planned run executed; non-converged runs still count.

#include <cstdio>
#include <cstdlib>
#include <iostream>

#include "CLI11.hpp"
#include "mgcp/mgcp.hpp"

namespace {

using namespace mgcp;

TensorFormat parse_format(const std::string& s) {
  if (s == "auto") return TensorFormat::Auto;
  if (s == "sparse") return TensorFormat::Sparse;
  if (s == "dense") return TensorFormat::Dense;
  throw InvalidArgument("unknown format '" + s + "'");
}

std::string cell(const std::optional<double>& v, int prec) {
  if (!v) return "-";
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.*f", prec, *v);
  return buf;
}

void print_summary(const PlanSummary& s) {
  std::printf("%-24s %-15s %4s %4s %9s %10s %7s %5s\n", "test", "variant", "runs", "ns", "it",
              "time[s]", "spd", "levs");
  for (const auto& r : s.rows)
    std::printf("%-24s %-15s %4zu %4zu %9s %10s %7s %5s\n", r.test.c_str(),
                std::string(to_string(r.variant)).c_str(), r.runs, r.ns,
                cell(r.avg_iterations, 1).c_str(), cell(r.avg_seconds, 3).c_str(),
                cell(r.avg_speedup, 2).c_str(), r.levels ? std::to_string(*r.levels).c_str() : "-");
}

struct RunArgs {
  std::string plan;
  std::string out;
  Index jobs = 0;
  std::vector<std::uint64_t> seeds;
  std::vector<std::string> variants;
  std::optional<double> tol;
  std::optional<Index> max_ml_cycles;
  std::optional<Index> max_als_sweeps;
  std::optional<Index> coarsest_size;
  bool quiet = false;
};

int cmd_run(const RunArgs& a) {
  ExperimentPlan plan = load_plan(a.plan);
  json over = json::object();
  if (a.tol) over["tol"] = *a.tol;
  if (a.max_ml_cycles) over["max_ml_cycles"] = *a.max_ml_cycles;
  if (a.max_als_sweeps) over["max_als_sweeps"] = *a.max_als_sweeps;
  if (a.coarsest_size) over["coarsest_size"] = *a.coarsest_size;
  for (auto& t : plan.tests) {
    apply_config(t.config, over);
    if (!a.seeds.empty()) t.seeds = a.seeds;
    if (!a.variants.empty()) {
      t.variants.clear();
      for (const auto& v : a.variants) t.variants.push_back(variant_from_string(v));
    }
  }
  plan.validate();

  std::filesystem::path out = "mgcp-out";
  if (plan.out_dir) out = *plan.out_dir;
  if (const char* env = std::getenv("MGCP_OUT_DIR"); env && *env) out = env;
  if (!a.out.empty()) out = a.out;

  RunOptions ro;
  ro.jobs = a.jobs ? a.jobs : plan.jobs;
  if (!a.quiet)
    ro.progress = [](const RunResult& r) {
      if (!r.executed)
        std::fprintf(stderr, "%s %s seed %llu: NOT RUN (%s)\n", r.test.c_str(),
                     std::string(to_string(r.variant)).c_str(),
                     static_cast<unsigned long long>(r.seed), r.failure.c_str());
      else
        std::fprintf(stderr, "%s %s seed %llu: %s, %zu it, %.3f s, g=%.3e\n", r.test.c_str(),
                     std::string(to_string(r.variant)).c_str(),
                     static_cast<unsigned long long>(r.seed),
                     std::string(to_string(r.outcome)).c_str(), r.iterations, r.seconds,
                     r.final_grad_norm);
    };
  const PlanSummary s = run_plan(plan, out, ro);
  print_summary(s);
  std::printf("results in %s\n", out.string().c_str());
  if (!s.all_executed()) {
    std::fprintf(stderr, "some planned runs did not execute\n");
    return 1;
  }
  return 0;
}

int cmd_gen(const std::string& problem, Index d, Index s, const std::string& path,
            const std::string& format) {
  AnyTensor t;
  TensorFormat fmt = parse_format(format);
  if (problem == "laplacian") {
    t = laplacian_tensor({d, s});
    if (fmt == TensorFormat::Auto && path.empty()) fmt = TensorFormat::Sparse;
  } else if (problem == "inverse-norm" || problem == "inverse_norm") {
    t = inverse_norm_tensor({s});
    if (fmt == TensorFormat::Auto && path.empty()) fmt = TensorFormat::Dense;
  } else {
    throw InvalidArgument("unknown problem '" + problem + "' (laplacian, inverse-norm)");
  }
  if (!path.empty()) {
    save_tensor(path, t, fmt);
    return 0;
  }
  if (fmt == TensorFormat::Sparse) {
    if (const auto* sp = std::get_if<SparseTensor>(&t))
      write_sparse(std::cout, *sp);
    else
      write_sparse(std::cout, SparseTensor::from_dense(std::get<DenseTensor>(t)));
  } else {
    write_dense(std::cout, to_dense(t));
  }
  return std::cout ? 0 : 1;
}

int cmd_check(const std::string& path, const std::string& format, const CheckOptions& opts) {
  const AnyTensor z = load_tensor(path, parse_format(format));
  const Shape& shape = shape_of(z);
  std::printf("%s: shape %s, %s, %zu stored entries\n", path.c_str(), shape.to_string().c_str(),
              std::holds_alternative<SparseTensor>(z) ? "sparse" : "dense", storage_size(z));
  bool ok = true;
  for (const auto& r : run_checks(z, opts)) {
    std::printf("%-5s %-28s %s\n", r.skipped ? "SKIP" : (r.passed ? "PASS" : "FAIL"), r.name.c_str(),
                r.detail.c_str());
    ok = ok && r.passed;
  }
  return ok ? 0 : 1;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Multigrid CP decomposition: experiments and tensor tools"};
  app.require_subcommand(1);

  RunArgs ra;
  auto* run = app.add_subcommand("run", "Execute an experiment plan");
  run->add_option("plan", ra.plan, "Plan file (JSON)")->required()->check(CLI::ExistingFile);
  run->add_option("-o,--out", ra.out, "Output directory");
  run->add_option("-j,--jobs", ra.jobs, "Parallel runs");
  run->add_option("--seeds", ra.seeds, "Replace every test's seeds")->delimiter(',');
  run->add_option("--variants", ra.variants, "Replace every test's variants")->delimiter(',');
  run->add_option("--tol", ra.tol, "Stopping tolerance on the gradient norm");
  run->add_option("--max-ml-cycles", ra.max_ml_cycles);
  run->add_option("--max-als-sweeps", ra.max_als_sweeps);
  run->add_option("--coarsest-size", ra.coarsest_size, "Largest mode size left uncoarsened");
  run->add_flag("-q,--quiet", ra.quiet, "No per-run progress");

  std::string problem, gen_out, gen_format = "auto";
  Index gen_d = 2, gen_s = 20;
  auto* gen = app.add_subcommand("gen", "Write a test tensor");
  gen->add_option("problem", problem, "laplacian | inverse-norm")->required();
  gen->add_option("--d", gen_d, "Laplacian lattice dimension (order 2d)");
  gen->add_option("--s", gen_s, "Points per axis / mode size");
  gen->add_option("-o,--output", gen_out, "File (.tns sparse, .dten dense); stdout if absent");
  gen->add_option("--format", gen_format, "auto | sparse | dense");

  std::string check_path, check_format = "auto";
  CheckOptions co;
  auto* check = app.add_subcommand("check", "Run the invariant suite on a tensor file");
  check->add_option("file", check_path)->required()->check(CLI::ExistingFile);
  check->add_option("--format", check_format, "auto | sparse | dense");
  check->add_option("--rank", co.rank, "Rank of the random factors used by the checks");
  check->add_option("--seed", co.seed);

  CLI11_PARSE(app, argc, argv);
  try {
    if (*run) return cmd_run(ra);
    if (*gen) return cmd_gen(problem, gen_d, gen_s, gen_out, gen_format);
    if (*check) return cmd_check(check_path, check_format, co);
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 2;
  }
  return 0;
}
