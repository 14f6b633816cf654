#pragma once

// Closed-form regression functions from a fixed catalog, with analytic derivatives.

#include <cctype>
#include <charconv>
#include <cmath>
#include <sstream>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "twocurve/error.hpp"
#include "twocurve/linalg.hpp"

namespace twocurve {

/// One catalog component `coef * g(t)`:
///   "0", "<number>", "t", "t^k", "sin(wt)", "cos(wt)", "exp(wt)", "log(t)", "1/t",
/// each optionally prefixed by "<number>*". Frequencies w may be written "2t",
/// "2*t", "-0.5t" or omitted ("sin(t)").
class BasisTerm {
 public:
  enum class Kind { constant, power, sine, cosine, exponential, log, reciprocal };

  BasisTerm(Kind kind, double param, double coef, std::string label)
      : kind_(kind), param_(param), coef_(coef), label_(std::move(label)) {}

  static BasisTerm parse(std::string_view text);

  Kind kind() const { return kind_; }
  double param() const { return param_; }
  double coef() const { return coef_; }
  const std::string& label() const { return label_; }
  bool is_zero() const { return kind_ == Kind::constant && coef_ == 0.0; }

  double value(double t) const {
    switch (kind_) {
      case Kind::constant: return coef_;
      case Kind::power: return coef_ * std::pow(t, param_);
      case Kind::sine: return coef_ * std::sin(param_ * t);
      case Kind::cosine: return coef_ * std::cos(param_ * t);
      case Kind::exponential: return coef_ * std::exp(param_ * t);
      case Kind::log: return coef_ * std::log(t);
      case Kind::reciprocal: return coef_ / t;
    }
    return 0.0;
  }

  double derivative(double t) const {
    switch (kind_) {
      case Kind::constant: return 0.0;
      case Kind::power:
        return param_ == 0.0 ? 0.0 : coef_ * param_ * std::pow(t, param_ - 1.0);
      case Kind::sine: return coef_ * param_ * std::cos(param_ * t);
      case Kind::cosine: return -coef_ * param_ * std::sin(param_ * t);
      case Kind::exponential: return coef_ * param_ * std::exp(param_ * t);
      case Kind::log: return coef_ / t;
      case Kind::reciprocal: return -coef_ / (t * t);
    }
    return 0.0;
  }

  /// Finite and continuously differentiable on the closed interval [a, b].
  bool defined_on(double a, double b) const {
    switch (kind_) {
      case Kind::log:
      case Kind::reciprocal: return a > 0.0;
      case Kind::power: return a > 0.0 || param_ == 0.0 || param_ >= 1.0;
      default: return std::isfinite(a) && std::isfinite(b);
    }
  }

 private:
  Kind kind_;
  double param_;
  double coef_;
  std::string label_;
};

namespace detail {

inline std::string strip_spaces(std::string_view s) {
  std::string out;
  for (char c : s)
    if (!std::isspace(static_cast<unsigned char>(c))) out.push_back(c);
  return out;
}

inline bool parse_number(std::string_view s, double& out) {
  if (s.empty()) return false;
  if (s.front() == '+') s.remove_prefix(1);
  const char* first = s.data();
  const char* last = s.data() + s.size();
  auto [ptr, ec] = std::from_chars(first, last, out);
  return ec == std::errc{} && ptr == last && std::isfinite(out);
}

/// Parses the argument of sin/cos/exp: "t", "2t", "2*t", "-t", "-0.5*t".
inline bool parse_frequency(std::string_view arg, double& w) {
  if (arg.empty() || arg.back() != 't') return false;
  arg.remove_suffix(1);
  if (!arg.empty() && arg.back() == '*') arg.remove_suffix(1);
  if (arg.empty() || arg == "+") {
    w = 1.0;
    return true;
  }
  if (arg == "-") {
    w = -1.0;
    return true;
  }
  return parse_number(arg, w);
}

}  // namespace detail

inline BasisTerm BasisTerm::parse(std::string_view text) {
  const std::string s = detail::strip_spaces(text);
  auto fail = [&]() -> BasisTerm {
    throw config_error("unknown basis term '" + std::string(text) +
                       "' (catalog: number, t, t^k, sin(wt), cos(wt), exp(wt), log(t), 1/t)");
  };
  if (s.empty()) fail();

  double coef = 1.0;
  std::string_view body = s;
  if (const auto star = body.find('*'); star != std::string_view::npos && body.find('(') > star) {
    if (!detail::parse_number(body.substr(0, star), coef)) fail();
    body.remove_prefix(star + 1);
  }

  double value = 0.0;
  if (detail::parse_number(body, value))
    return BasisTerm(Kind::constant, 0.0, coef * value, s);
  if (body == "t") return BasisTerm(Kind::power, 1.0, coef, s);
  if (body.rfind("t^", 0) == 0) {
    double k = 0.0;
    if (!detail::parse_number(body.substr(2), k) || k < 0.0) fail();
    return BasisTerm(Kind::power, k, coef, s);
  }
  if (body == "log(t)") return BasisTerm(Kind::log, 0.0, coef, s);
  if (body == "1/t") return BasisTerm(Kind::reciprocal, 0.0, coef, s);

  struct Fn {
    std::string_view prefix;
    Kind kind;
  };
  for (const Fn fn : {Fn{"sin(", Kind::sine}, Fn{"cos(", Kind::cosine}, Fn{"exp(", Kind::exponential}}) {
    if (body.rfind(fn.prefix, 0) == 0 && body.back() == ')') {
      const auto arg = body.substr(fn.prefix.size(), body.size() - fn.prefix.size() - 1);
      double w = 0.0;
      if (!detail::parse_frequency(arg, w)) fail();
      return BasisTerm(fn.kind, w, coef, s);
    }
  }
  return fail();
}

/// A vector of regression functions f(t) = (g_1(t), ..., g_k(t)) for one group.
class CurveBasis {
 public:
  CurveBasis() = default;
  CurveBasis(std::string name, std::vector<BasisTerm> terms)
      : name_(std::move(name)), terms_(std::move(terms)) {}

  static CurveBasis parse(std::string name, const std::vector<std::string>& terms) {
    std::vector<BasisTerm> parsed;
    parsed.reserve(terms.size());
    for (const auto& t : terms) parsed.push_back(BasisTerm::parse(t));
    return CurveBasis(std::move(name), std::move(parsed));
  }

  const std::string& name() const { return name_; }
  std::size_t dim() const { return terms_.size(); }
  bool empty() const { return terms_.empty(); }
  const std::vector<BasisTerm>& terms() const { return terms_; }

  Vec eval(double t) const {
    Vec out(static_cast<Eigen::Index>(terms_.size()));
    for (std::size_t i = 0; i < terms_.size(); ++i) out(static_cast<Eigen::Index>(i)) = terms_[i].value(t);
    return out;
  }

  Vec deriv(double t) const {
    Vec out(static_cast<Eigen::Index>(terms_.size()));
    for (std::size_t i = 0; i < terms_.size(); ++i)
      out(static_cast<Eigen::Index>(i)) = terms_[i].derivative(t);
    return out;
  }

  bool defined_on(double a, double b) const {
    for (const auto& t : terms_)
      if (!t.defined_on(a, b)) return false;
    return true;
  }

  std::vector<std::string> labels() const {
    std::vector<std::string> out;
    for (const auto& t : terms_) out.push_back(t.label());
    return out;
  }

 private:
  std::string name_;
  std::vector<BasisTerm> terms_;
};

/// The three bases of the numerical study.
namespace catalog {

/// (t, sin t, cos t)
inline CurveBasis f_a() { return CurveBasis::parse("f_A", {"t", "sin(t)", "cos(t)"}); }
/// (t^2, cos t, cos 2t)
inline CurveBasis f_b() { return CurveBasis::parse("f_B", {"t^2", "cos(t)", "cos(2t)"}); }
/// (t, log t, 1/t)
inline CurveBasis f_c() { return CurveBasis::parse("f_C", {"t", "log(t)", "1/t"}); }

inline CurveBasis by_name(std::string_view name) {
  if (name == "f_A" || name == "fA" || name == "A") return f_a();
  if (name == "f_B" || name == "fB" || name == "B") return f_b();
  if (name == "f_C" || name == "fC" || name == "C") return f_c();
  throw config_error("unknown built-in basis '" + std::string(name) + "' (expected f_A, f_B or f_C)");
}

}  // namespace catalog

}  // namespace twocurve
