#pragma once

#include <cmath>
#include <cstddef>
#include <limits>
#include <memory>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace qem {

class Error : public std::runtime_error {
  using std::runtime_error::runtime_error;
};

/// Syntax or name-resolution failure. `position` is the 0-based byte offset
/// of the offending token in the source string.
class ParseError : public Error {
 public:
  ParseError(const std::string& what, std::size_t position)
      : Error(what), position_(position) {}
  std::size_t position() const { return position_; }

 private:
  std::size_t position_;
};

/// Domain violation (ln of a non-positive value, division by zero, sqrt of a
/// negative, non-positive base of a real power) or a non-finite intermediate.
class EvalError : public Error {
  using Error::Error;
};

class InvalidArgument : public Error {
  using Error::Error;
};

/// Open-interval constraint on a single coordinate; both ends strict.
struct CoordBounds {
  double lower = -std::numeric_limits<double>::infinity();
  double upper = std::numeric_limits<double>::infinity();
  bool contains(double x) const { return x > lower && x < upper; }
};

/// Ordered coordinate names plus optional open-box bounds.
class Chart {
 public:
  explicit Chart(std::vector<std::string> names);
  Chart(std::vector<std::string> names, std::vector<CoordBounds> bounds);

  int dim() const { return static_cast<int>(names_.size()); }
  const std::string& name(int i) const { return names_[i]; }
  const std::vector<std::string>& names() const { return names_; }
  const CoordBounds& bounds(int i) const { return bounds_[i]; }
  std::optional<int> index_of(std::string_view name) const;
  bool in_bounds(std::span<const double> p) const;

 private:
  std::vector<std::string> names_;
  std::vector<CoordBounds> bounds_;
};

enum class UnaryFn { Neg, Exp, Ln, Sqrt, Sin, Cos, Tan, Sinh, Cosh, Tanh, Sech };
enum class BinaryOp { Add, Sub, Mul, Div, Pow };

/// Value, gradient and symmetric Hessian of a scalar at a point. Only the
/// upper triangle of the Hessian is stored; (i,j) and (j,i) read the same
/// slot, so symmetry is structural.
class Jet2 {
 public:
  explicit Jet2(int dim)
      : dim_(dim), value_(0.0), grad_(dim, 0.0), hess_(packed_size(dim), 0.0) {}

  static Jet2 constant(int dim, double v) {
    Jet2 j(dim);
    j.value_ = v;
    return j;
  }
  /// Seed for the `index`-th coordinate: value v, unit gradient, zero Hessian.
  static Jet2 variable(int dim, int index, double v) {
    Jet2 j(dim);
    j.value_ = v;
    j.grad_[index] = 1.0;
    return j;
  }

  int dim() const { return dim_; }
  double value() const { return value_; }
  double grad(int i) const { return grad_[i]; }
  double hess(int i, int j) const { return hess_[packed_index(i, j)]; }

  double& value() { return value_; }
  double& grad(int i) { return grad_[i]; }
  double& hess(int i, int j) { return hess_[packed_index(i, j)]; }

  bool all_finite() const;

  friend Jet2 operator+(const Jet2& a, const Jet2& b);
  friend Jet2 operator-(const Jet2& a, const Jet2& b);
  friend Jet2 operator-(const Jet2& a);
  friend Jet2 operator*(const Jet2& a, const Jet2& b);
  friend Jet2 operator/(const Jet2& a, const Jet2& b);

  /// Chain rule: given f(u0), f'(u0), f''(u0), propagate through u.
  friend Jet2 chain(const Jet2& u, double f0, double f1, double f2);

 private:
  static std::size_t packed_size(int d) {
    return static_cast<std::size_t>(d) * (d + 1) / 2;
  }
  std::size_t packed_index(int i, int j) const {
    if (i > j) std::swap(i, j);
    return static_cast<std::size_t>(i) * dim_ - static_cast<std::size_t>(i) * (i + 1) / 2 + j;
  }

  int dim_;
  double value_;
  std::vector<double> grad_;
  std::vector<double> hess_;
};

/// Immutable scalar expression tree over named coordinates. Construction via
/// the factories/operators below or `parse`; evaluation is pure, so one tree
/// may be evaluated from many threads at once.
class Expr {
 public:
  struct Node;
  using NodePtr = std::shared_ptr<const Node>;

  Expr() = default;  // empty; evaluating throws

  static Expr constant(double v);
  static Expr coord(int index, std::string name);
  static Expr coord(const Chart& chart, std::string_view name);
  static Expr unary(UnaryFn fn, Expr arg);
  static Expr binary(BinaryOp op, Expr lhs, Expr rhs);

  bool empty() const { return root_ == nullptr; }
  const Node& root() const;

  /// Largest coordinate index referenced, or -1 for constant expressions.
  int max_coord_index() const;

 private:
  explicit Expr(NodePtr root) : root_(std::move(root)) {}
  NodePtr root_;
};

struct Expr::Node {
  enum class Kind { Constant, Coord, Unary, Binary };
  Kind kind;
  double value = 0.0;    // Constant
  int coord = -1;        // Coord
  std::string name;      // Coord
  UnaryFn fn{};          // Unary
  BinaryOp op{};         // Binary
  NodePtr a, b;          // children
};

Expr operator+(Expr a, Expr b);
Expr operator-(Expr a, Expr b);
Expr operator*(Expr a, Expr b);
Expr operator/(Expr a, Expr b);
Expr operator-(Expr a);
Expr pow(Expr base, Expr exponent);
Expr pow_int(Expr base, long long k);
Expr apply(UnaryFn fn, Expr arg);

/// Parse `src` over `chart`. Grammar: identifiers (chart coordinates),
/// decimal literals, + - * / ^, function calls, parentheses; ^ binds tighter
/// than * /, which bind tighter than + -; ^ is right-associative; unary minus
/// allowed. Throws ParseError with position.
Expr parse(std::string_view src, const Chart& chart);

/// Render with minimal parentheses; `parse(to_string(parse(s)))` rebuilds the
/// same tree.
std::string to_string(const Expr& e);

/// Value only; agrees bit-for-bit with eval_jet2(e,p).value().
double eval_value(const Expr& e, std::span<const double> p);

/// Value, exact gradient and exact Hessian at p by forward jet propagation.
Jet2 eval_jet2(const Expr& e, std::span<const double> p);

/// Rebuild the tree with coordinate i renamed/renumbered to
/// new_index[i] in `target`. Used to embed factor expressions into a
/// product chart.
Expr reindex_coords(const Expr& e, std::span<const int> new_index, const Chart& target);

/// Structural equality of trees.
bool equal_trees(const Expr& a, const Expr& b);

const char* unary_name(UnaryFn fn);

/// Shortest decimal string that parses back to exactly v. Used by the
/// expression printer and the tabular writers.
std::string format_double(double v);

}  // namespace qem
