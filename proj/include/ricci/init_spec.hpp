#pragma once

// Tiny expression language for initial data: a sum of terms
//   a * cos(k*x) * cos(l*y) ...
// where each factor is cos(...) or sin(...) of an integer multiple of a coordinate.
// Coordinates: x, y, theta, x1, y1, x2, y2. Example: "0.1*cos(x) - 0.05*cos(2*x)*sin(y)".
//
// The list form "a,k[,l]; a,k[,l]" is shorthand for a*cos(k*u)*cos(l*w) in the
// first two coordinates of the target domain.

#include <cctype>
#include <cmath>
#include <map>
#include <string>
#include <vector>

#include "ricci/error.hpp"

namespace ricci::init {

struct Factor {
  bool is_sin = false;
  int k = 1;
  std::string var;
};

struct Term {
  double coef = 1.0;
  std::vector<Factor> factors;
};

struct Expression {
  std::vector<Term> terms;

  /// Evaluates at named coordinate values. Unknown variables are an error.
  double operator()(const std::map<std::string, double>& at) const {
    double s = 0;
    for (const auto& t : terms) {
      double v = t.coef;
      for (const auto& f : t.factors) {
        auto it = at.find(f.var);
        require(it != at.end(), "variable '" + f.var + "' is not defined on this domain");
        v *= f.is_sin ? std::sin(f.k * it->second) : std::cos(f.k * it->second);
      }
      s += v;
    }
    return s;
  }

  std::vector<std::string> variables() const {
    std::vector<std::string> out;
    for (const auto& t : terms)
      for (const auto& f : t.factors) out.push_back(f.var);
    return out;
  }
};

namespace detail {

class Parser {
 public:
  explicit Parser(std::string s) {
    for (char c : s)
      if (!std::isspace(static_cast<unsigned char>(c))) src_ += c;
  }

  Expression parse() {
    Expression e;
    require(!src_.empty(), "empty initial-data expression");
    while (pos_ < src_.size()) {
      double sign = 1.0;
      if (peek() == '+' || peek() == '-') {
        sign = get() == '-' ? -1.0 : 1.0;
      } else if (!e.terms.empty()) {
        fail("expected '+' or '-'");
      }
      Term t = term();
      t.coef *= sign;
      e.terms.push_back(std::move(t));
    }
    return e;
  }

 private:
  char peek() const { return pos_ < src_.size() ? src_[pos_] : '\0'; }
  char get() { return src_[pos_++]; }
  [[noreturn]] void fail(const std::string& what) const {
    throw Error(ErrorKind::InvalidInput, "init spec: " + what + " at position " + std::to_string(pos_));
  }
  void expect(char c) {
    if (peek() != c) fail(std::string("expected '") + c + "'");
    ++pos_;
  }

  Term term() {
    Term t;
    if (std::isdigit(static_cast<unsigned char>(peek())) || peek() == '.') {
      t.coef = number();
      if (peek() != '*') return t;
      ++pos_;
    }
    t.factors.push_back(factor());
    while (peek() == '*') {
      ++pos_;
      t.factors.push_back(factor());
    }
    return t;
  }

  double number() {
    std::size_t used = 0;
    double v = 0;
    try {
      v = std::stod(src_.substr(pos_), &used);
    } catch (const std::exception&) {
      fail("bad number");
    }
    pos_ += used;
    return v;
  }

  Factor factor() {
    Factor f;
    if (src_.compare(pos_, 4, "cos(") == 0) {
      f.is_sin = false;
    } else if (src_.compare(pos_, 4, "sin(") == 0) {
      f.is_sin = true;
    } else {
      fail("expected cos( or sin(");
    }
    pos_ += 4;
    if (std::isdigit(static_cast<unsigned char>(peek()))) {
      std::size_t start = pos_;
      while (std::isdigit(static_cast<unsigned char>(peek()))) ++pos_;
      f.k = std::stoi(src_.substr(start, pos_ - start));
      expect('*');
    }
    std::size_t start = pos_;
    while (std::isalnum(static_cast<unsigned char>(peek()))) ++pos_;
    f.var = src_.substr(start, pos_ - start);
    static const char* known[] = {"x", "y", "theta", "x1", "y1", "x2", "y2"};
    bool ok = false;
    for (const char* k : known) ok = ok || f.var == k;
    if (!ok) fail("unknown variable '" + f.var + "'");
    expect(')');
    return f;
  }

  std::string src_;
  std::size_t pos_ = 0;
};

}  // namespace detail

/// Parses either form. `vars` names the coordinates used by the list form.
inline Expression parse(const std::string& spec, const std::vector<std::string>& vars) {
  if (spec.find('(') != std::string::npos) return detail::Parser(spec).parse();
  Expression e;
  std::size_t start = 0;
  while (start <= spec.size()) {
    const std::size_t end = std::min(spec.find(';', start), spec.size());
    const std::string item = spec.substr(start, end - start);
    start = end + 1;
    if (item.find_first_not_of(" \t") == std::string::npos) {
      if (end == spec.size()) break;
      continue;
    }
    std::vector<double> nums;
    std::size_t p = 0;
    while (p <= item.size()) {
      const std::size_t q = std::min(item.find(',', p), item.size());
      try {
        std::size_t used = 0;
        const std::string tok = item.substr(p, q - p);
        nums.push_back(std::stod(tok, &used));
        require(tok.find_first_not_of(" \t", used) == std::string::npos, "trailing characters");
      } catch (const std::exception&) {
        throw Error(ErrorKind::InvalidInput, "init spec: bad list entry '" + item + "'");
      }
      p = q + 1;
      if (q == item.size()) break;
    }
    require(nums.size() >= 2 && nums.size() <= 1 + vars.size(), "init spec: list entries are a,k[,l]");
    Term t;
    t.coef = nums[0];
    for (std::size_t i = 1; i < nums.size(); ++i) {
      require(nums[i] == std::floor(nums[i]), "init spec: wavenumbers must be integers");
      if (nums[i] != 0) t.factors.push_back({false, static_cast<int>(nums[i]), vars[i - 1]});
    }
    e.terms.push_back(std::move(t));
    if (end == spec.size()) break;
  }
  require(!e.terms.empty(), "empty initial-data spec");
  return e;
}

}  // namespace ricci::init
