#pragma once

// Self-consistency checks on one tensor, used by `mgcp check`.

#include <cmath>
#include <random>
#include <sstream>

#include "mgcp/als.hpp"
#include "mgcp/io.hpp"

namespace mgcp {

struct CheckResult {
  std::string name;
  bool passed = false;
  bool skipped = false;
  std::string detail;
};

struct CheckOptions {
  std::uint64_t seed = 1;
  Index rank = 2;
  /// Dense-oracle checks are skipped above this many entries.
  Index dense_limit = Index{1} << 20;
  Index fd_samples = 12;
};

namespace detail {

inline double rel_diff(const Matrix& a, const Matrix& b) {
  const double scale = std::max(a.norm(), b.norm());
  return scale == 0.0 ? 0.0 : (a - b).norm() / scale;
}

inline std::string sci(double v) {
  std::ostringstream os;
  os.precision(3);
  os << std::scientific << v;
  return os.str();
}

}  // namespace detail

inline std::vector<CheckResult> run_checks(const AnyTensor& z, const CheckOptions& opts = {}) {
  std::vector<CheckResult> out;
  const Shape& shape = shape_of(z);
  const bool small = shape.numel() <= opts.dense_limit;
  auto add = [&](std::string name, auto&& body) {
    CheckResult r;
    r.name = std::move(name);
    try {
      body(r);
    } catch (const std::exception& e) {
      r.passed = false;
      r.detail = std::string("exception: ") + e.what();
    }
    out.push_back(std::move(r));
  };
  auto skip = [&](CheckResult& r) {
    r.skipped = true;
    r.passed = true;
    r.detail = "skipped: more than " + std::to_string(opts.dense_limit) + " entries";
  };

  std::mt19937_64 rng(opts.seed);
  FactorSet f = FactorSet::random_uniform(shape, opts.rank, rng);

  add("finite-entries", [&](CheckResult& r) {
    double sum = 0.0;
    std::visit([&](const auto& t) { for (double v : t.values()) sum += std::abs(v); }, z);
    r.passed = std::isfinite(sum);
    r.detail = "sum |z| = " + detail::sci(sum);
  });

  add("text-round-trip", [&](CheckResult& r) {
    std::stringstream ss;
    bool same = false;
    if (const auto* s = std::get_if<SparseTensor>(&z)) {
      write_sparse(ss, *s);
      same = read_sparse(ss) == *s;
    } else {
      const auto& d = std::get<DenseTensor>(z);
      write_dense(ss, d);
      same = read_dense(ss) == d;
    }
    r.passed = same;
    r.detail = same ? "exact" : "re-read tensor differs";
  });

  add("unfold-fold", [&](CheckResult& r) {
    if (!small) return skip(r);
    const DenseTensor d = to_dense(z);
    for (Index n = 0; n < shape.order(); ++n)
      if (!(fold(unfold(d, n), n, shape) == d)) {
        r.detail = "mode " + std::to_string(n) + " does not round-trip";
        return;
      }
    r.passed = true;
    r.detail = "all modes";
  });

  add("mttkrp-sparse-vs-dense", [&](CheckResult& r) {
    if (!small) return skip(r);
    const DenseTensor d = to_dense(z);
    const SparseTensor s = SparseTensor::from_dense(d);
    double worst = 0.0;
    for (Index n = 0; n < shape.order(); ++n)
      worst = std::max(worst, detail::rel_diff(mttkrp(d, f.factors, n), mttkrp(s, f.factors, n)));
    r.passed = worst <= 1e-12;
    r.detail = "max relative difference " + detail::sci(worst);
  });

  add("objective-expansion", [&](CheckResult& r) {
    if (!small) return skip(r);
    const DenseTensor d = to_dense(z);
    const double a = objective(d, f);
    const double b = objective(SparseTensor::from_dense(d), f);
    const double rel = std::abs(a - b) / std::max({std::abs(a), std::abs(b), 1e-300});
    r.passed = rel <= 1e-9;
    r.detail = "relative difference " + detail::sci(rel);
  });

  add("gradient-finite-difference", [&](CheckResult& r) {
    if (!small) return skip(r);
    const DenseTensor d = to_dense(z);
    const GradientSet g = gradient(d, f);
    double gmax = 0.0;
    for (const auto& m : g.grads) gmax = std::max(gmax, m.cwiseAbs().maxCoeff());
    double worst = 0.0;
    for (Index k = 0; k < opts.fd_samples; ++k) {
      const Index n = std::uniform_int_distribution<Index>(0, shape.order() - 1)(rng);
      const Index i = std::uniform_int_distribution<Index>(0, shape[n] - 1)(rng);
      const Index c = std::uniform_int_distribution<Index>(0, opts.rank - 1)(rng);
      const double h = 1e-6 * std::max(1.0, std::abs(f[n](i, c)));
      FactorSet p = f, m = f;
      p[n](i, c) += h;
      m[n](i, c) -= h;
      const double fd = (objective(d, p) - objective(d, m)) / (2.0 * h);
      const double err = std::abs(fd - g.grads[n](i, c)) / (std::abs(g.grads[n](i, c)) + 1e-3 * gmax);
      worst = std::max(worst, err);
    }
    r.passed = worst <= 1e-5;
    r.detail = std::to_string(opts.fd_samples) + " entries, worst relative error " + detail::sci(worst);
  });

  add("als-monotone", [&](CheckResult& r) {
    FactorSet x = f;
    double prev = objective(z, x);
    const double start = prev;
    for (int k = 0; k < 5; ++k) {
      x = als_sweep(z, std::move(x), true);
      const double cur = objective(z, x);
      if (cur > prev + 1e-12 * std::max(1.0, start)) {
        r.detail = "objective rose at sweep " + std::to_string(k + 1);
        return;
      }
      prev = cur;
    }
    r.passed = true;
    r.detail = "f: " + detail::sci(start) + " -> " + detail::sci(prev) + " over 5 sweeps";
  });

  return out;
}

}  // namespace mgcp
