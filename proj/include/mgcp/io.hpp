#pragma once

// Text formats.
//
// Sparse (.tns):
//   N
//   I_1 ... I_N
//   i_1 ... i_N value        one line per entry, 1-based indices
//
// Dense (.dten):
//   I_1 ... I_N
//   values in linear order (mode 0 fastest), any whitespace layout
//
// Blank lines and lines starting with '#' are ignored in both. Numbers are
// written in shortest round-trip form, so write -> read is exact.
//
// Trace CSV: a version line, `# key=value` metadata lines, then the header
// phase,cycle,grad_norm,objective,seconds,work_units

#include <charconv>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <string_view>
#include <unordered_map>

#include "mgcp/tensor.hpp"
#include "mgcp/trace.hpp"

namespace mgcp {

enum class TensorFormat { Auto, Sparse, Dense };

inline constexpr std::string_view kTraceVersion = "# mgcp-trace v1";
inline constexpr std::string_view kTraceHeader = "phase,cycle,grad_norm,objective,seconds,work_units";

inline std::string format_double(double v) {
  char buf[64];
  auto res = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, res.ptr);
}

namespace detail {

struct Token {
  std::string_view text;
  std::size_t line;
  std::size_t column;
};

/// Whitespace tokenizer with 1-based positions; skips comments and blank lines.
class Tokenizer {
 public:
  Tokenizer(std::istream& in, std::string file) : in_(in), file_(std::move(file)) {}

  /// Tokens of the next non-empty line, or false at end of input.
  bool next_line(std::vector<Token>& out) {
    out.clear();
    while (std::getline(in_, buf_)) {
      ++line_;
      if (!buf_.empty() && buf_.back() == '\r') buf_.pop_back();
      std::size_t first = buf_.find_first_not_of(" \t");
      if (first == std::string::npos || buf_[first] == '#') continue;
      std::size_t pos = first;
      while (pos < buf_.size()) {
        std::size_t end = buf_.find_first_of(" \t", pos);
        if (end == std::string::npos) end = buf_.size();
        out.push_back({std::string_view(buf_).substr(pos, end - pos), line_, pos + 1});
        pos = buf_.find_first_not_of(" \t", end);
        if (pos == std::string::npos) break;
      }
      return true;
    }
    return false;
  }

  std::size_t line() const noexcept { return line_; }
  const std::string& file() const noexcept { return file_; }

  [[noreturn]] void fail(const Token& t, const std::string& what) const {
    throw ParseError(file_, t.line, t.column, what);
  }
  [[noreturn]] void fail_eof(const std::string& what) const {
    throw ParseError(file_, line_ + 1, 1, what);
  }

  Index parse_index(const Token& t) const {
    Index v = 0;
    auto [ptr, ec] = std::from_chars(t.text.data(), t.text.data() + t.text.size(), v);
    if (ec != std::errc() || ptr != t.text.data() + t.text.size())
      fail(t, "expected a non-negative integer, got '" + std::string(t.text) + "'");
    return v;
  }

  double parse_value(const Token& t) const {
    double v = 0.0;
    auto [ptr, ec] = std::from_chars(t.text.data(), t.text.data() + t.text.size(), v);
    if (ec != std::errc() || ptr != t.text.data() + t.text.size())
      fail(t, "expected a real number, got '" + std::string(t.text) + "'");
    if (!std::isfinite(v)) fail(t, "non-finite value");
    return v;
  }

 private:
  std::istream& in_;
  std::string file_;
  std::string buf_;
  std::size_t line_ = 0;
};

inline Shape parse_shape(Tokenizer& tz, const std::vector<Token>& toks) {
  std::vector<Index> sizes;
  for (const auto& t : toks) {
    const Index s = tz.parse_index(t);
    if (s == 0) tz.fail(t, "mode sizes must be positive");
    sizes.push_back(s);
  }
  try {
    Shape shape(std::move(sizes));
    (void)shape.numel();
    return shape;
  } catch (const Error& e) {
    tz.fail(toks.front(), e.what());
  }
}

}  // namespace detail

inline SparseTensor read_sparse(std::istream& in, const std::string& name = "<input>") {
  detail::Tokenizer tz(in, name);
  std::vector<detail::Token> toks;
  if (!tz.next_line(toks)) tz.fail_eof("missing order line");
  if (toks.size() != 1) tz.fail(toks[1], "order line must hold a single integer");
  const Index n = tz.parse_index(toks[0]);
  if (n == 0) tz.fail(toks[0], "order must be positive");
  if (!tz.next_line(toks)) tz.fail_eof("missing shape line");
  if (toks.size() != n)
    tz.fail(toks.size() > n ? toks[n] : toks.back(),
            "shape line has " + std::to_string(toks.size()) + " sizes, header says " +
                std::to_string(n));
  const Shape shape = detail::parse_shape(tz, toks);

  std::vector<SparseEntry> entries;
  std::unordered_map<Index, std::size_t> seen;  // linear index -> line
  while (tz.next_line(toks)) {
    if (toks.size() != n + 1)
      tz.fail(toks.size() > n + 1 ? toks[n + 1] : toks.back(),
              "entry needs " + std::to_string(n) + " indices and a value, got " +
                  std::to_string(toks.size()) + " fields");
    std::vector<Index> idx(n);
    Index lin = 0;
    for (Index k = 0; k < n; ++k) {
      const Index i = tz.parse_index(toks[k]);
      if (i < 1 || i > shape[k])
        tz.fail(toks[k], "index " + std::to_string(i) + " outside 1.." + std::to_string(shape[k]));
      idx[k] = i - 1;
      lin += idx[k] * shape.stride(k);
    }
    const double v = tz.parse_value(toks[n]);
    auto [it, fresh] = seen.emplace(lin, toks[0].line);
    if (!fresh)
      tz.fail(toks[0], "duplicate index " + SparseTensor::format_index(idx) + " (first on line " +
                           std::to_string(it->second) + ")");
    entries.push_back({std::move(idx), v});
  }
  return SparseTensor(shape, std::move(entries), SparseTensor::Duplicates::Reject);
}

inline DenseTensor read_dense(std::istream& in, const std::string& name = "<input>") {
  detail::Tokenizer tz(in, name);
  std::vector<detail::Token> toks;
  if (!tz.next_line(toks)) tz.fail_eof("missing shape line");
  const Shape shape = detail::parse_shape(tz, toks);
  std::vector<double> values;
  values.reserve(shape.numel());
  while (tz.next_line(toks)) {
    for (const auto& t : toks) {
      if (values.size() == shape.numel())
        tz.fail(t, "more values than the shape " + shape.to_string() + " holds");
      values.push_back(tz.parse_value(t));
    }
  }
  if (values.size() != shape.numel())
    tz.fail_eof("expected " + std::to_string(shape.numel()) + " values, got " +
                std::to_string(values.size()));
  return DenseTensor(shape, std::move(values));
}

inline TensorFormat format_from_path(const std::filesystem::path& path) {
  const auto ext = path.extension().string();
  if (ext == ".tns") return TensorFormat::Sparse;
  if (ext == ".dten") return TensorFormat::Dense;
  throw InvalidArgument("cannot infer tensor format from '" + path.string() +
                        "' (use .tns or .dten, or name the format)");
}

inline AnyTensor load_tensor(const std::filesystem::path& path,
                             TensorFormat format = TensorFormat::Auto) {
  if (format == TensorFormat::Auto) format = format_from_path(path);
  std::ifstream in(path);
  if (!in) throw Error("cannot open '" + path.string() + "'");
  if (format == TensorFormat::Sparse) return read_sparse(in, path.string());
  return read_dense(in, path.string());
}

inline void write_sparse(std::ostream& out, const SparseTensor& t) {
  const Shape& shape = t.shape();
  out << shape.order() << '\n';
  for (Index k = 0; k < shape.order(); ++k) out << (k ? " " : "") << shape[k];
  out << '\n';
  for (Index e = 0; e < t.nnz(); ++e) {
    for (Index i : t.index(e)) out << i + 1 << ' ';
    out << format_double(t.value(e)) << '\n';
  }
}

inline void write_dense(std::ostream& out, const DenseTensor& t) {
  const Shape& shape = t.shape();
  for (Index k = 0; k < shape.order(); ++k) out << (k ? " " : "") << shape[k];
  out << '\n';
  const Index row = shape[0];
  for (Index i = 0; i < t.numel(); ++i)
    out << format_double(t.data()[i]) << ((i + 1) % row == 0 ? '\n' : ' ');
}

inline void save_tensor(const std::filesystem::path& path, const AnyTensor& t,
                        TensorFormat format = TensorFormat::Auto) {
  if (format == TensorFormat::Auto) format = format_from_path(path);
  std::ofstream out(path);
  if (!out) throw Error("cannot write '" + path.string() + "'");
  if (format == TensorFormat::Sparse) {
    if (const auto* s = std::get_if<SparseTensor>(&t))
      write_sparse(out, *s);
    else
      write_sparse(out, SparseTensor::from_dense(std::get<DenseTensor>(t)));
  } else {
    write_dense(out, to_dense(t));
  }
  if (!out) throw Error("write to '" + path.string() + "' failed");
}

/// Free-form run metadata stored in the trace's comment block.
using TraceMeta = std::vector<std::pair<std::string, std::string>>;

inline void write_trace(std::ostream& out, const ConvergenceTrace& trace, const TraceMeta& meta = {}) {
  auto clean = [](std::string s) {
    for (char& c : s)
      if (c == '\n' || c == '\r') c = ' ';
    return s;
  };
  out << kTraceVersion << '\n';
  for (const auto& [k, v] : meta) out << "# " << k << '=' << clean(v) << '\n';
  out << "# seed=" << trace.seed << '\n';
  out << "# outcome=" << to_string(trace.outcome) << '\n';
  out << "# initial_grad_norm=" << format_double(trace.initial_grad_norm) << '\n';
  if (!trace.error_message.empty()) out << "# error=" << clean(trace.error_message) << '\n';
  out << kTraceHeader << '\n';
  for (const auto& r : trace.records)
    out << to_string(r.phase) << ',' << r.cycle << ',' << format_double(r.grad_norm) << ','
        << format_double(r.objective) << ',' << format_double(r.seconds) << ','
        << format_double(r.work_units) << '\n';
}

struct TraceFile {
  ConvergenceTrace trace;
  std::unordered_map<std::string, std::string> meta;
};

inline TraceFile read_trace(std::istream& in, const std::string& name = "<trace>") {
  TraceFile tf;
  std::string line;
  std::size_t lineno = 0;
  auto fail = [&](std::size_t col, const std::string& what) {
    throw ParseError(name, lineno, col, what);
  };
  if (!std::getline(in, line) || (++lineno, line != kTraceVersion))
    fail(1, "missing or unsupported trace version line");
  bool header = false;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    if (!header) {
      if (line.rfind("# ", 0) == 0) {
        const auto eq = line.find('=');
        if (eq == std::string::npos) fail(3, "metadata line needs key=value");
        tf.meta[line.substr(2, eq - 2)] = line.substr(eq + 1);
        continue;
      }
      if (line != kTraceHeader) fail(1, "expected column header '" + std::string(kTraceHeader) + "'");
      header = true;
      continue;
    }
    std::vector<std::string_view> cells;
    std::vector<std::size_t> cols;
    std::size_t pos = 0;
    std::string_view sv(line);
    while (true) {
      const auto comma = sv.find(',', pos);
      cells.push_back(sv.substr(pos, comma == std::string_view::npos ? sv.npos : comma - pos));
      cols.push_back(pos + 1);
      if (comma == std::string_view::npos) break;
      pos = comma + 1;
    }
    if (cells.size() != 6) fail(1, "expected 6 columns, got " + std::to_string(cells.size()));
    TraceRecord r;
    try {
      r.phase = phase_from_string(cells[0]);
    } catch (const Error& e) {
      fail(1, e.what());
    }
    auto num = [&](int k, auto& dst) {
      auto [p, ec] = std::from_chars(cells[k].data(), cells[k].data() + cells[k].size(), dst);
      if (ec != std::errc() || p != cells[k].data() + cells[k].size())
        fail(cols[k], "malformed number '" + std::string(cells[k]) + "'");
    };
    num(1, r.cycle);
    num(2, r.grad_norm);
    num(3, r.objective);
    num(4, r.seconds);
    num(5, r.work_units);
    tf.trace.records.push_back(r);
  }
  if (!header) fail(1, "trace has no column header");

  auto get = [&](const char* key) -> const std::string* {
    auto it = tf.meta.find(key);
    return it == tf.meta.end() ? nullptr : &it->second;
  };
  if (auto* s = get("seed")) tf.trace.seed = std::stoull(*s);
  if (auto* s = get("outcome")) {
    if (*s == "converged")
      tf.trace.outcome = Outcome::Converged;
    else if (*s == "iteration-limit")
      tf.trace.outcome = Outcome::IterationLimit;
    else if (*s == "error")
      tf.trace.outcome = Outcome::Error;
    else
      throw ParseError(name, 0, 0, "unknown outcome '" + *s + "'");
  }
  if (auto* s = get("initial_grad_norm")) std::from_chars(s->data(), s->data() + s->size(), tf.trace.initial_grad_norm);
  if (auto* s = get("error")) tf.trace.error_message = *s;
  return tf;
}

inline void save_trace(const std::filesystem::path& path, const ConvergenceTrace& trace,
                       const TraceMeta& meta = {}) {
  std::ofstream out(path);
  if (!out) throw Error("cannot write '" + path.string() + "'");
  write_trace(out, trace, meta);
  if (!out) throw Error("write to '" + path.string() + "' failed");
}

inline TraceFile load_trace(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error("cannot open '" + path.string() + "'");
  return read_trace(in, path.string());
}

}  // namespace mgcp
