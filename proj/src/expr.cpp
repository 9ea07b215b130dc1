#include "expr.hpp"

#include <algorithm>
#include <array>
#include <charconv>
#include <cstdlib>
#include <utility>

namespace qem {

// ---------------------------------------------------------------------------
// Chart

namespace {

void check_names_unique(const std::vector<std::string>& names) {
  for (std::size_t i = 0; i < names.size(); ++i) {
    if (names[i].empty()) throw InvalidArgument("chart: empty coordinate name");
    for (std::size_t j = i + 1; j < names.size(); ++j) {
      if (names[i] == names[j])
        throw InvalidArgument("chart: duplicate coordinate name '" + names[i] + "'");
    }
  }
}

}  // namespace

Chart::Chart(std::vector<std::string> names)
    : names_(std::move(names)), bounds_(names_.size()) {
  check_names_unique(names_);
}

Chart::Chart(std::vector<std::string> names, std::vector<CoordBounds> bounds)
    : names_(std::move(names)), bounds_(std::move(bounds)) {
  check_names_unique(names_);
  if (bounds_.size() != names_.size())
    throw InvalidArgument("chart: bounds/names size mismatch");
  for (const CoordBounds& b : bounds_) {
    if (!(b.lower < b.upper))
      throw InvalidArgument("chart: empty coordinate interval");
  }
}

std::optional<int> Chart::index_of(std::string_view name) const {
  for (std::size_t i = 0; i < names_.size(); ++i) {
    if (names_[i] == name) return static_cast<int>(i);
  }
  return std::nullopt;
}

bool Chart::in_bounds(std::span<const double> p) const {
  if (p.size() != names_.size()) return false;
  for (std::size_t i = 0; i < p.size(); ++i) {
    if (!bounds_[i].contains(p[i])) return false;
  }
  return true;
}

// ---------------------------------------------------------------------------
// Jet2 arithmetic

bool Jet2::all_finite() const {
  if (!std::isfinite(value_)) return false;
  for (double g : grad_)
    if (!std::isfinite(g)) return false;
  for (double h : hess_)
    if (!std::isfinite(h)) return false;
  return true;
}

Jet2 operator+(const Jet2& a, const Jet2& b) {
  Jet2 r(a.dim_);
  r.value_ = a.value_ + b.value_;
  for (std::size_t i = 0; i < r.grad_.size(); ++i) r.grad_[i] = a.grad_[i] + b.grad_[i];
  for (std::size_t i = 0; i < r.hess_.size(); ++i) r.hess_[i] = a.hess_[i] + b.hess_[i];
  return r;
}

Jet2 operator-(const Jet2& a, const Jet2& b) {
  Jet2 r(a.dim_);
  r.value_ = a.value_ - b.value_;
  for (std::size_t i = 0; i < r.grad_.size(); ++i) r.grad_[i] = a.grad_[i] - b.grad_[i];
  for (std::size_t i = 0; i < r.hess_.size(); ++i) r.hess_[i] = a.hess_[i] - b.hess_[i];
  return r;
}

Jet2 operator-(const Jet2& a) {
  Jet2 r(a.dim_);
  r.value_ = -a.value_;
  for (std::size_t i = 0; i < r.grad_.size(); ++i) r.grad_[i] = -a.grad_[i];
  for (std::size_t i = 0; i < r.hess_.size(); ++i) r.hess_[i] = -a.hess_[i];
  return r;
}

// (ab)' = a'b + ab',  (ab)'' = a''b + a'b' + b'a' + ab''
Jet2 operator*(const Jet2& a, const Jet2& b) {
  const int d = a.dim_;
  Jet2 r(d);
  r.value_ = a.value_ * b.value_;
  for (int i = 0; i < d; ++i)
    r.grad_[i] = a.grad_[i] * b.value_ + a.value_ * b.grad_[i];
  for (int i = 0; i < d; ++i) {
    for (int j = i; j < d; ++j) {
      r.hess(i, j) = a.hess(i, j) * b.value_ + a.grad_[i] * b.grad_[j] +
                     a.grad_[j] * b.grad_[i] + a.value_ * b.hess(i, j);
    }
  }
  return r;
}

// q = a/b:  q0 = a0/b0,  q_i = (a_i − q0 b_i)/b0,
//           q_ij = (a_ij − q_i b_j − q_j b_i − q0 b_ij)/b0
Jet2 operator/(const Jet2& a, const Jet2& b) {
  if (b.value_ == 0.0) throw EvalError("division by zero");
  const int d = a.dim_;
  Jet2 r(d);
  r.value_ = a.value_ / b.value_;
  for (int i = 0; i < d; ++i)
    r.grad_[i] = (a.grad_[i] - r.value_ * b.grad_[i]) / b.value_;
  for (int i = 0; i < d; ++i) {
    for (int j = i; j < d; ++j) {
      r.hess(i, j) = (a.hess(i, j) - r.grad_[i] * b.grad_[j] -
                      r.grad_[j] * b.grad_[i] - r.value_ * b.hess(i, j)) /
                     b.value_;
    }
  }
  return r;
}

// (f∘u)_i = f' u_i,  (f∘u)_ij = f'' u_i u_j + f' u_ij
Jet2 chain(const Jet2& u, double f0, double f1, double f2) {
  const int d = u.dim_;
  Jet2 r(d);
  r.value_ = f0;
  for (int i = 0; i < d; ++i) r.grad_[i] = f1 * u.grad_[i];
  for (int i = 0; i < d; ++i) {
    for (int j = i; j < d; ++j) {
      r.hess(i, j) = f2 * u.grad_[i] * u.grad_[j] + f1 * u.hess(i, j);
    }
  }
  return r;
}

// ---------------------------------------------------------------------------
// Expr construction

namespace {

Expr::NodePtr make_node(Expr::Node n) {
  return std::make_shared<const Expr::Node>(std::move(n));
}

}  // namespace

const Expr::Node& Expr::root() const {
  if (!root_) throw InvalidArgument("empty expression");
  return *root_;
}

Expr Expr::constant(double v) {
  Node n;
  n.kind = Node::Kind::Constant;
  n.value = v;
  return Expr(make_node(std::move(n)));
}

Expr Expr::coord(int index, std::string name) {
  if (index < 0) throw InvalidArgument("coordinate index must be non-negative");
  Node n;
  n.kind = Node::Kind::Coord;
  n.coord = index;
  n.name = std::move(name);
  return Expr(make_node(std::move(n)));
}

Expr Expr::coord(const Chart& chart, std::string_view name) {
  std::optional<int> idx = chart.index_of(name);
  if (!idx) throw InvalidArgument("unknown coordinate '" + std::string(name) + "'");
  return coord(*idx, std::string(name));
}

Expr Expr::unary(UnaryFn fn, Expr arg) {
  Node n;
  n.kind = Node::Kind::Unary;
  n.fn = fn;
  n.a = std::move(arg.root_);
  if (!n.a) throw InvalidArgument("empty expression");
  return Expr(make_node(std::move(n)));
}

Expr Expr::binary(BinaryOp op, Expr lhs, Expr rhs) {
  Node n;
  n.kind = Node::Kind::Binary;
  n.op = op;
  n.a = std::move(lhs.root_);
  n.b = std::move(rhs.root_);
  if (!n.a || !n.b) throw InvalidArgument("empty expression");
  return Expr(make_node(std::move(n)));
}

namespace {

int max_coord_index_node(const Expr::Node& n) {
  switch (n.kind) {
    case Expr::Node::Kind::Constant:
      return -1;
    case Expr::Node::Kind::Coord:
      return n.coord;
    case Expr::Node::Kind::Unary:
      return max_coord_index_node(*n.a);
    case Expr::Node::Kind::Binary:
      return std::max(max_coord_index_node(*n.a), max_coord_index_node(*n.b));
  }
  return -1;
}

}  // namespace

int Expr::max_coord_index() const { return max_coord_index_node(root()); }

Expr operator+(Expr a, Expr b) { return Expr::binary(BinaryOp::Add, std::move(a), std::move(b)); }
Expr operator-(Expr a, Expr b) { return Expr::binary(BinaryOp::Sub, std::move(a), std::move(b)); }
Expr operator*(Expr a, Expr b) { return Expr::binary(BinaryOp::Mul, std::move(a), std::move(b)); }
Expr operator/(Expr a, Expr b) { return Expr::binary(BinaryOp::Div, std::move(a), std::move(b)); }
Expr operator-(Expr a) { return Expr::unary(UnaryFn::Neg, std::move(a)); }
Expr pow(Expr base, Expr exponent) {
  return Expr::binary(BinaryOp::Pow, std::move(base), std::move(exponent));
}
Expr pow_int(Expr base, long long k) {
  return pow(std::move(base), Expr::constant(static_cast<double>(k)));
}
Expr apply(UnaryFn fn, Expr arg) { return Expr::unary(fn, std::move(arg)); }

const char* unary_name(UnaryFn fn) {
  switch (fn) {
    case UnaryFn::Neg: return "-";
    case UnaryFn::Exp: return "exp";
    case UnaryFn::Ln: return "ln";
    case UnaryFn::Sqrt: return "sqrt";
    case UnaryFn::Sin: return "sin";
    case UnaryFn::Cos: return "cos";
    case UnaryFn::Tan: return "tan";
    case UnaryFn::Sinh: return "sinh";
    case UnaryFn::Cosh: return "cosh";
    case UnaryFn::Tanh: return "tanh";
    case UnaryFn::Sech: return "sech";
  }
  return "?";
}

// ---------------------------------------------------------------------------
// Parser

namespace {

struct Token {
  enum class Kind { Number, Ident, Plus, Minus, Star, Slash, Caret, LParen, RParen, End };
  Kind kind;
  std::size_t pos;     // byte offset in source
  double number = 0.0;
  std::string_view text;
};

class Lexer {
 public:
  explicit Lexer(std::string_view src) : src_(src) { advance(); }

  const Token& peek() const { return tok_; }
  Token take() {
    Token t = tok_;
    advance();
    return t;
  }

 private:
  void advance() {
    while (i_ < src_.size() && (src_[i_] == ' ' || src_[i_] == '\t' ||
                                src_[i_] == '\n' || src_[i_] == '\r'))
      ++i_;
    tok_.pos = i_;
    if (i_ >= src_.size()) {
      tok_.kind = Token::Kind::End;
      return;
    }
    char c = src_[i_];
    switch (c) {
      case '+': tok_.kind = Token::Kind::Plus; ++i_; return;
      case '-': tok_.kind = Token::Kind::Minus; ++i_; return;
      case '*': tok_.kind = Token::Kind::Star; ++i_; return;
      case '/': tok_.kind = Token::Kind::Slash; ++i_; return;
      case '^': tok_.kind = Token::Kind::Caret; ++i_; return;
      case '(': tok_.kind = Token::Kind::LParen; ++i_; return;
      case ')': tok_.kind = Token::Kind::RParen; ++i_; return;
      default: break;
    }
    if ((c >= '0' && c <= '9') || c == '.') {
      lex_number();
      return;
    }
    if (is_ident_start(c)) {
      std::size_t start = i_;
      while (i_ < src_.size() && is_ident_char(src_[i_])) ++i_;
      tok_.kind = Token::Kind::Ident;
      tok_.text = src_.substr(start, i_ - start);
      return;
    }
    throw ParseError("unexpected character '" + std::string(1, c) + "' at position " +
                         std::to_string(i_),
                     i_);
  }

  void lex_number() {
    std::size_t start = i_;
    while (i_ < src_.size() && ((src_[i_] >= '0' && src_[i_] <= '9') || src_[i_] == '.')) ++i_;
    if (i_ < src_.size() && (src_[i_] == 'e' || src_[i_] == 'E')) {
      std::size_t mark = i_;
      ++i_;
      if (i_ < src_.size() && (src_[i_] == '+' || src_[i_] == '-')) ++i_;
      if (i_ < src_.size() && src_[i_] >= '0' && src_[i_] <= '9') {
        while (i_ < src_.size() && src_[i_] >= '0' && src_[i_] <= '9') ++i_;
      } else {
        i_ = mark;  // bare 'e' belongs to the next token
      }
    }
    std::string_view text = src_.substr(start, i_ - start);
    double v = 0.0;
    auto [ptr, ec] = std::from_chars(text.data(), text.data() + text.size(), v);
    if (ec != std::errc{} || ptr != text.data() + text.size())
      throw ParseError("malformed number '" + std::string(text) + "' at position " +
                           std::to_string(start),
                       start);
    tok_.kind = Token::Kind::Number;
    tok_.number = v;
    tok_.text = text;
  }

  static bool is_ident_start(char c) {
    return (c >= 'a' && c <= 'z') || (c >= 'A' && c <= 'Z') || c == '_';
  }
  static bool is_ident_char(char c) {
    return is_ident_start(c) || (c >= '0' && c <= '9');
  }

  std::string_view src_;
  std::size_t i_ = 0;
  Token tok_{};
};

const std::array<std::pair<std::string_view, UnaryFn>, 10> kFunctions = {{
    {"exp", UnaryFn::Exp},
    {"ln", UnaryFn::Ln},
    {"sqrt", UnaryFn::Sqrt},
    {"sin", UnaryFn::Sin},
    {"cos", UnaryFn::Cos},
    {"tan", UnaryFn::Tan},
    {"sinh", UnaryFn::Sinh},
    {"cosh", UnaryFn::Cosh},
    {"tanh", UnaryFn::Tanh},
    {"sech", UnaryFn::Sech},
}};

std::optional<UnaryFn> lookup_function(std::string_view name) {
  for (const auto& [fname, fn] : kFunctions) {
    if (fname == name) return fn;
  }
  return std::nullopt;
}

// Precedence climbing. Levels: + - (1), * / (2), unary minus (3), ^ (4).
// ^ is right-associative and binds its exponent through a following unary
// minus, so "x^-2" and "-x^2" both parse the conventional way.
class Parser {
 public:
  Parser(std::string_view src, const Chart& chart) : lex_(src), chart_(chart) {}

  Expr run() {
    Expr e = parse_sum();
    expect_end();
    return e;
  }

 private:
  Expr parse_sum() {
    Expr lhs = parse_term();
    for (;;) {
      Token::Kind k = lex_.peek().kind;
      if (k == Token::Kind::Plus) {
        lex_.take();
        lhs = std::move(lhs) + parse_term();
      } else if (k == Token::Kind::Minus) {
        lex_.take();
        lhs = std::move(lhs) - parse_term();
      } else {
        return lhs;
      }
    }
  }

  Expr parse_term() {
    Expr lhs = parse_unary();
    for (;;) {
      Token::Kind k = lex_.peek().kind;
      if (k == Token::Kind::Star) {
        lex_.take();
        lhs = std::move(lhs) * parse_unary();
      } else if (k == Token::Kind::Slash) {
        lex_.take();
        lhs = std::move(lhs) / parse_unary();
      } else {
        return lhs;
      }
    }
  }

  Expr parse_unary() {
    if (lex_.peek().kind == Token::Kind::Minus) {
      lex_.take();
      Expr inner = parse_unary();
      // Fold a negated literal into the constant so printing round-trips.
      const Expr::Node& n = inner.root();
      if (n.kind == Expr::Node::Kind::Constant) return Expr::constant(-n.value);
      return -std::move(inner);
    }
    return parse_power();
  }

  Expr parse_power() {
    Expr base = parse_atom();
    if (lex_.peek().kind == Token::Kind::Caret) {
      lex_.take();
      return pow(std::move(base), parse_unary());
    }
    return base;
  }

  Expr parse_atom() {
    Token t = lex_.take();
    switch (t.kind) {
      case Token::Kind::Number:
        return Expr::constant(t.number);
      case Token::Kind::LParen: {
        Expr e = parse_sum();
        expect(Token::Kind::RParen, "expected ')'");
        return e;
      }
      case Token::Kind::Ident: {
        if (lex_.peek().kind == Token::Kind::LParen) {
          std::optional<UnaryFn> fn = lookup_function(t.text);
          if (!fn)
            throw ParseError("unknown function '" + std::string(t.text) + "' at position " +
                                 std::to_string(t.pos),
                             t.pos);
          lex_.take();  // '('
          Expr arg = parse_sum();
          expect(Token::Kind::RParen, "expected ')'");
          return Expr::unary(*fn, std::move(arg));
        }
        std::optional<int> idx = chart_.index_of(t.text);
        if (!idx)
          throw ParseError("unknown identifier '" + std::string(t.text) + "' at position " +
                               std::to_string(t.pos),
                           t.pos);
        return Expr::coord(*idx, std::string(t.text));
      }
      default:
        throw ParseError("unexpected token at position " + std::to_string(t.pos), t.pos);
    }
  }

  void expect(Token::Kind k, const char* what) {
    Token t = lex_.take();
    if (t.kind != k)
      throw ParseError(std::string(what) + " at position " + std::to_string(t.pos), t.pos);
  }

  void expect_end() {
    const Token& t = lex_.peek();
    if (t.kind != Token::Kind::End)
      throw ParseError("trailing input at position " + std::to_string(t.pos), t.pos);
  }

  Lexer lex_;
  const Chart& chart_;
};

}  // namespace

Expr parse(std::string_view src, const Chart& chart) {
  return Parser(src, chart).run();
}

// ---------------------------------------------------------------------------
// Printer

std::string format_double(double v) {
  std::array<char, 32> buf;
  auto [ptr, ec] = std::to_chars(buf.data(), buf.data() + buf.size(), v);
  (void)ec;
  return std::string(buf.data(), ptr);
}

namespace {

// Printer precedence; atoms (constants, coordinates, calls) are 5.
int node_prec(const Expr::Node& n) {
  switch (n.kind) {
    case Expr::Node::Kind::Constant:
      return n.value < 0.0 ? 3 : 5;  // negative literal prints with leading '-'
    case Expr::Node::Kind::Coord:
      return 5;
    case Expr::Node::Kind::Unary:
      return n.fn == UnaryFn::Neg ? 3 : 5;
    case Expr::Node::Kind::Binary:
      switch (n.op) {
        case BinaryOp::Add:
        case BinaryOp::Sub: return 1;
        case BinaryOp::Mul:
        case BinaryOp::Div: return 2;
        case BinaryOp::Pow: return 4;
      }
  }
  return 5;
}

void print_node(const Expr::Node& n, std::string& out);

void print_child(const Expr::Node& child, int min_prec, std::string& out) {
  if (node_prec(child) < min_prec) {
    out += '(';
    print_node(child, out);
    out += ')';
  } else {
    print_node(child, out);
  }
}

void print_node(const Expr::Node& n, std::string& out) {
  switch (n.kind) {
    case Expr::Node::Kind::Constant:
      out += format_double(n.value);
      return;
    case Expr::Node::Kind::Coord:
      out += n.name;
      return;
    case Expr::Node::Kind::Unary:
      if (n.fn == UnaryFn::Neg) {
        out += '-';
        print_child(*n.a, 3, out);
      } else {
        out += unary_name(n.fn);
        out += '(';
        print_node(*n.a, out);
        out += ')';
      }
      return;
    case Expr::Node::Kind::Binary: {
      const int prec = node_prec(n);
      const bool right_assoc = n.op == BinaryOp::Pow;
      const char* sym = nullptr;
      switch (n.op) {
        case BinaryOp::Add: sym = " + "; break;
        case BinaryOp::Sub: sym = " - "; break;
        case BinaryOp::Mul: sym = "*"; break;
        case BinaryOp::Div: sym = "/"; break;
        case BinaryOp::Pow: sym = "^"; break;
      }
      print_child(*n.a, right_assoc ? prec + 1 : prec, out);
      out += sym;
      print_child(*n.b, right_assoc ? prec : prec + 1, out);
      return;
    }
  }
}

}  // namespace

std::string to_string(const Expr& e) {
  std::string out;
  print_node(e.root(), out);
  return out;
}

// ---------------------------------------------------------------------------
// Evaluation
//
// One templated walker drives both the plain-double and the jet evaluation.
// Every value-channel operation goes through the same std:: call in both
// instantiations, so eval_value and eval_jet2(...).value() agree bit for bit.

namespace {

[[noreturn]] void domain_error(const char* what) { throw EvalError(what); }

// f(u), f'(u), f''(u) for the unary function table. The value slot is the
// single source of truth for both evaluation modes.
struct UnaryDerivs {
  double f0, f1, f2;
};

UnaryDerivs unary_derivs(UnaryFn fn, double u) {
  switch (fn) {
    case UnaryFn::Neg:
      return {-u, -1.0, 0.0};
    case UnaryFn::Exp: {
      double e = std::exp(u);
      return {e, e, e};
    }
    case UnaryFn::Ln: {
      if (u <= 0.0) domain_error("ln of a non-positive value");
      return {std::log(u), 1.0 / u, -1.0 / (u * u)};
    }
    case UnaryFn::Sqrt: {
      if (u < 0.0) domain_error("sqrt of a negative value");
      double s = std::sqrt(u);
      if (u == 0.0) return {0.0, std::numeric_limits<double>::infinity(),
                            -std::numeric_limits<double>::infinity()};
      return {s, 0.5 / s, -0.25 / (s * u)};
    }
    case UnaryFn::Sin:
      return {std::sin(u), std::cos(u), -std::sin(u)};
    case UnaryFn::Cos:
      return {std::cos(u), -std::sin(u), -std::cos(u)};
    case UnaryFn::Tan: {
      double t = std::tan(u);
      double dt = 1.0 + t * t;
      return {t, dt, 2.0 * t * dt};
    }
    case UnaryFn::Sinh:
      return {std::sinh(u), std::cosh(u), std::sinh(u)};
    case UnaryFn::Cosh:
      return {std::cosh(u), std::sinh(u), std::cosh(u)};
    case UnaryFn::Tanh: {
      double t = std::tanh(u);
      double dt = 1.0 - t * t;  // sech²
      return {t, dt, -2.0 * t * dt};
    }
    case UnaryFn::Sech: {
      double s = 1.0 / std::cosh(u);
      double t = std::tanh(u);
      // sech' = −sech·tanh,  sech'' = sech·tanh² − sech³
      return {s, -s * t, s * t * t - s * s * s};
    }
  }
  domain_error("unknown function");
}

// Exponent usable as an integer power: a Constant (possibly negated) holding
// an exact integral value of modest size.
std::optional<long long> integral_exponent(const Expr::Node& n) {
  const Expr::Node* c = &n;
  bool negated = false;
  if (c->kind == Expr::Node::Kind::Unary && c->fn == UnaryFn::Neg &&
      c->a->kind == Expr::Node::Kind::Constant) {
    negated = true;
    c = c->a.get();
  }
  if (c->kind != Expr::Node::Kind::Constant) return std::nullopt;
  double v = c->value;
  if (!(v == std::floor(v)) || std::abs(v) > 64.0) return std::nullopt;
  long long k = static_cast<long long>(v);
  return negated ? -k : k;
}

// Scalar policy: double and Jet2 instantiations share the tree walk below.
struct ValueOps {
  using T = double;
  std::span<const double> p;
  T constant(double c) const { return c; }
  T coordinate(int i) const { return p[i]; }
  static T add(const T& a, const T& b) { return a + b; }
  static T sub(const T& a, const T& b) { return a - b; }
  static T mul(const T& a, const T& b) { return a * b; }
  static T div(const T& a, const T& b) {
    if (b == 0.0) domain_error("division by zero");
    return a / b;
  }
  static T unary(UnaryFn fn, const T& u) { return unary_derivs(fn, u).f0; }
  static T pow_general(const T& a, const T& b) {
    if (a <= 0.0) domain_error("power with non-positive base and non-integer exponent");
    return std::pow(a, b);
  }
  static double value_of(const T& x) { return x; }
  static bool finite(const T& x) { return std::isfinite(x); }
};

struct JetOps {
  using T = Jet2;
  std::span<const double> p;
  int dim;
  T constant(double c) const { return Jet2::constant(dim, c); }
  T coordinate(int i) const { return Jet2::variable(dim, i, p[i]); }
  static T add(const T& a, const T& b) { return a + b; }
  static T sub(const T& a, const T& b) { return a - b; }
  static T mul(const T& a, const T& b) { return a * b; }
  static T div(const T& a, const T& b) { return a / b; }
  static T unary(UnaryFn fn, const T& u) {
    UnaryDerivs d = unary_derivs(fn, u.value());
    return chain(u, d.f0, d.f1, d.f2);
  }
  // a^b = exp(b ln a) for the derivative channels; the value channel uses the
  // same std::pow as plain evaluation.
  static T pow_general(const T& a, const T& b) {
    if (a.value() <= 0.0) domain_error("power with non-positive base and non-integer exponent");
    const int d = a.dim();
    double v = std::pow(a.value(), b.value());
    double la = std::log(a.value());
    Jet2 r(d);
    r.value() = v;
    // w = b ln a;  (a^b)_i = v w_i;  (a^b)_ij = v (w_i w_j + w_ij)
    std::vector<double> w(d);
    for (int i = 0; i < d; ++i)
      w[i] = b.grad(i) * la + b.value() * a.grad(i) / a.value();
    for (int i = 0; i < d; ++i) r.grad(i) = v * w[i];
    for (int i = 0; i < d; ++i) {
      for (int j = i; j < d; ++j) {
        double wij = b.hess(i, j) * la + b.grad(i) * a.grad(j) / a.value() +
                     b.grad(j) * a.grad(i) / a.value() +
                     b.value() * (a.hess(i, j) / a.value() -
                                  a.grad(i) * a.grad(j) / (a.value() * a.value()));
        r.hess(i, j) = v * (w[i] * w[j] + wij);
      }
    }
    return r;
  }
  static double value_of(const T& x) { return x.value(); }
  static bool finite(const T& x) { return x.all_finite(); }
};

// x^k by repeated multiplication; the identical sequence of multiplications
// runs in both evaluation modes.
template <class Ops>
typename Ops::T eval_pow_int(const Ops& ops, const typename Ops::T& base, long long k) {
  if (k == 0) return ops.constant(1.0);
  bool inv = k < 0;
  long long a = inv ? -k : k;
  typename Ops::T r = base;
  for (long long i = 1; i < a; ++i) r = Ops::mul(r, base);
  if (inv) return Ops::div(ops.constant(1.0), r);
  return r;
}

template <class Ops>
typename Ops::T eval_node(const Ops& ops, const Expr::Node& n) {
  using T = typename Ops::T;
  T r = [&]() -> T {
    switch (n.kind) {
      case Expr::Node::Kind::Constant:
        return ops.constant(n.value);
      case Expr::Node::Kind::Coord:
        if (n.coord >= static_cast<int>(ops.p.size()))
          throw InvalidArgument("point dimension too small for expression");
        return ops.coordinate(n.coord);
      case Expr::Node::Kind::Unary:
        return Ops::unary(n.fn, eval_node(ops, *n.a));
      case Expr::Node::Kind::Binary: {
        if (n.op == BinaryOp::Pow) {
          if (std::optional<long long> k = integral_exponent(*n.b))
            return eval_pow_int(ops, eval_node(ops, *n.a), *k);
          return Ops::pow_general(eval_node(ops, *n.a), eval_node(ops, *n.b));
        }
        T a = eval_node(ops, *n.a);
        T b = eval_node(ops, *n.b);
        switch (n.op) {
          case BinaryOp::Add: return Ops::add(a, b);
          case BinaryOp::Sub: return Ops::sub(a, b);
          case BinaryOp::Mul: return Ops::mul(a, b);
          case BinaryOp::Div: return Ops::div(a, b);
          case BinaryOp::Pow: break;
        }
        domain_error("unknown operator");
      }
    }
    domain_error("unknown node");
  }();
  if (!std::isfinite(Ops::value_of(r))) throw EvalError("non-finite intermediate value");
  return r;
}

}  // namespace

double eval_value(const Expr& e, std::span<const double> p) {
  ValueOps ops{p};
  return eval_node(ops, e.root());
}

Jet2 eval_jet2(const Expr& e, std::span<const double> p) {
  JetOps ops{p, static_cast<int>(p.size())};
  Jet2 r = eval_node(ops, e.root());
  if (!r.all_finite()) throw EvalError("non-finite derivative");
  return r;
}

// ---------------------------------------------------------------------------
// Structural helpers

namespace {

bool equal_nodes(const Expr::Node& a, const Expr::Node& b) {
  if (a.kind != b.kind) return false;
  switch (a.kind) {
    case Expr::Node::Kind::Constant:
      return a.value == b.value;
    case Expr::Node::Kind::Coord:
      return a.coord == b.coord && a.name == b.name;
    case Expr::Node::Kind::Unary:
      return a.fn == b.fn && equal_nodes(*a.a, *b.a);
    case Expr::Node::Kind::Binary:
      return a.op == b.op && equal_nodes(*a.a, *b.a) && equal_nodes(*a.b, *b.b);
  }
  return false;
}

}  // namespace

Expr reindex_coords(const Expr& e, std::span<const int> new_index, const Chart& target) {
  struct Builder {
    std::span<const int> idx;
    const Chart& target;
    Expr build(const Expr::Node& n) {
      switch (n.kind) {
        case Expr::Node::Kind::Constant:
          return Expr::constant(n.value);
        case Expr::Node::Kind::Coord: {
          if (n.coord >= static_cast<int>(idx.size()))
            throw InvalidArgument("reindex: coordinate out of range");
          int ni = idx[n.coord];
          if (ni < 0 || ni >= target.dim())
            throw InvalidArgument("reindex: target index out of range");
          return Expr::coord(ni, target.name(ni));
        }
        case Expr::Node::Kind::Unary:
          return Expr::unary(n.fn, build(*n.a));
        case Expr::Node::Kind::Binary:
          return Expr::binary(n.op, build(*n.a), build(*n.b));
      }
      throw InvalidArgument("reindex: unknown node");
    }
  };
  return Builder{new_index, target}.build(e.root());
}

bool equal_trees(const Expr& a, const Expr& b) {
  return equal_nodes(a.root(), b.root());
}

}  // namespace qem
