#include "obnc/state_io.hpp"

#include <cctype>
#include <charconv>
#include <cstdio>
#include <fstream>
#include <sstream>

#include "obnc/errors.hpp"

namespace obnc {
namespace {

void append_matrix(std::string& out, const Matrix& m) {
  char buf[40];
  for (Eigen::Index r = 0; r < m.rows(); ++r) {
    for (Eigen::Index c = 0; c < m.cols(); ++c) {
      std::snprintf(buf, sizeof buf, "%.17g", m(r, c));
      if (c > 0) out += ' ';
      out += buf;
    }
    out += '\n';
  }
}

// Whitespace-separated tokens with byte offsets and line/column tracking.
class Tokens {
 public:
  explicit Tokens(const std::string& text) : text_(text) {}

  std::string_view next(const char* what) {
    skip();
    if (pos_ >= text_.size()) fail("unexpected end of file, expected " + std::string(what));
    start_ = pos_;
    while (pos_ < text_.size() && !std::isspace(static_cast<unsigned char>(text_[pos_]))) ++pos_;
    return std::string_view(text_).substr(start_, pos_ - start_);
  }

  void expect(const char* word) {
    const std::string_view tok = next(word);
    if (tok != word) fail("expected '" + std::string(word) + "', got '" + std::string(tok) + "'");
  }

  int positive_int(const char* key) {
    expect(key);
    const std::string_view tok = next("an integer");
    int v = 0;
    auto [p, ec] = std::from_chars(tok.data(), tok.data() + tok.size(), v);
    if (ec != std::errc() || p != tok.data() + tok.size() || v < 1)
      fail(std::string(key) + " must be a positive integer, got '" + std::string(tok) + "'");
    return v;
  }

  double number(const char* what) {
    const std::string_view tok = next(what);
    double v = 0;
    auto [p, ec] = std::from_chars(tok.data(), tok.data() + tok.size(), v);
    if (ec != std::errc() || p != tok.data() + tok.size())
      fail("expected " + std::string(what) + ", got '" + std::string(tok) + "'");
    return v;
  }

  // Peek whether the rest of the current line holds another token.
  bool more_on_line() {
    std::size_t p = pos_;
    while (p < text_.size() && (text_[p] == ' ' || text_[p] == '\t' || text_[p] == '\r')) ++p;
    return p < text_.size() && text_[p] != '\n';
  }

  void end() {
    skip();
    if (pos_ < text_.size()) {
      start_ = pos_;
      fail("trailing data after the H block");
    }
  }

  std::size_t token_offset() const { return start_; }

  [[noreturn]] void fail(const std::string& why) const { fail_at(start_, why); }

  [[noreturn]] void fail_at(std::size_t offset, const std::string& why) const {
    std::size_t line = 1, col = 1;
    for (std::size_t i = 0; i < offset && i < text_.size(); ++i) {
      if (text_[i] == '\n') {
        ++line;
        col = 1;
      } else {
        ++col;
      }
    }
    throw ParseError("state file, byte " + std::to_string(offset) + ": " + why, line, col,
                     offset);
  }

 private:
  void skip() {
    while (pos_ < text_.size() && std::isspace(static_cast<unsigned char>(text_[pos_]))) ++pos_;
    start_ = pos_;
  }

  const std::string& text_;
  std::size_t pos_ = 0;
  std::size_t start_ = 0;
};

Matrix read_block(Tokens& tok, const char* name, int rows, int cols) {
  tok.expect(name);
  const std::size_t block_start = tok.token_offset();
  Matrix m(rows, cols);
  for (int r = 0; r < rows; ++r)
    for (int c = 0; c < cols; ++c) m(r, c) = tok.number("a matrix entry");
  if (!m.allFinite()) tok.fail_at(block_start, std::string(name) + " has non-finite entries");
  const double viol = membership_violation(m);
  if (!(viol <= kMembershipTol))
    tok.fail_at(block_start, std::string(name) + " columns are not unit norm (violation " +
                                 std::to_string(viol) + ")");
  return m;
}

}  // namespace

std::string format_state(const UfmProblem& problem, const UfmState& state) {
  check_state(problem, state);
  char buf[64];
  std::string out = "OBNC1\n";
  out += "d " + std::to_string(problem.dim()) + "\n";
  out += "K " + std::to_string(problem.num_classes()) + "\n";
  out += "n " + std::to_string(problem.per_class()) + "\n";
  std::snprintf(buf, sizeof buf, "tau %.17g\n", problem.tau());
  out += buf;
  const LossSpec& spec = problem.spec();
  out += "loss " + loss_name(spec.kind);
  if (spec.kind == LossKind::kFocal || spec.kind == LossKind::kLabelSmoothing) {
    std::snprintf(buf, sizeof buf, " %.17g", spec.param);
    out += buf;
  }
  out += "\nW\n";
  append_matrix(out, state.w.matrix());
  out += "H\n";
  append_matrix(out, state.h.matrix());
  return out;
}

void write_state(const std::string& path, const UfmProblem& problem, const UfmState& state) {
  const std::string text = format_state(problem, state);
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error("cannot open '" + path + "' for writing");
  out << text;
  if (!out) throw Error("failed writing '" + path + "'");
}

StateFile parse_state(const std::string& text) {
  Tokens tok(text);
  tok.expect("OBNC1");
  const int d = tok.positive_int("d");
  const int k = tok.positive_int("K");
  const int n = tok.positive_int("n");
  tok.expect("tau");
  const double tau = tok.number("a temperature");
  tok.expect("loss");
  const std::string_view kind_tok = tok.next("a loss name");
  const std::size_t kind_at = tok.token_offset();
  LossSpec spec;
  try {
    spec.kind = parse_loss_kind(std::string(kind_tok));
  } catch (const Error& e) {
    tok.fail_at(kind_at, e.what());
  }
  spec.tau = tau;
  if (spec.kind == LossKind::kFocal || spec.kind == LossKind::kLabelSmoothing)
    spec.param = tok.number("the loss parameter");
  else if (tok.more_on_line())
    tok.fail("unexpected parameter for loss " + std::string(kind_tok));

  try {
    UfmProblem problem(d, k, n, spec);
    Matrix w = read_block(tok, "W", d, k);
    Matrix h = read_block(tok, "H", d, k * n);
    tok.end();
    return StateFile{problem, UfmState{ObliqueMatrix(std::move(w)), ObliqueMatrix(std::move(h))}};
  } catch (const ParseError&) {
    throw;
  } catch (const Error& e) {
    tok.fail_at(kind_at, e.what());
  }
}

StateFile read_state(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ParseError("cannot open state file '" + path + "'", 0, 0, 0);
  std::ostringstream ss;
  ss << in.rdbuf();
  return parse_state(ss.str());
}

}  // namespace obnc
