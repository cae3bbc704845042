#include "aqo/calc.hpp"

#include <cctype>
#include <charconv>
#include <cmath>

namespace aqo {

namespace {

struct Parser {
  const std::string& src;
  std::size_t pos = 0;

  void skip_ws() {
    while (pos < src.size() && std::isspace(static_cast<unsigned char>(src[pos]))) ++pos;
  }

  bool eat(char c) {
    skip_ws();
    if (pos < src.size() && src[pos] == c) {
      ++pos;
      return true;
    }
    return false;
  }

  double expression() {
    double value = term();
    for (;;) {
      if (eat('+')) value += term();
      else if (eat('-')) value -= term();
      else return value;
    }
  }

  double term() {
    double value = factor();
    for (;;) {
      if (eat('*')) value *= factor();
      else if (eat('/')) {
        const double rhs = factor();
        if (rhs == 0.0) throw CalcError("division by zero");
        value /= rhs;
      } else {
        return value;
      }
    }
  }

  double factor() {
    skip_ws();
    if (eat('(')) {
      const double value = expression();
      if (!eat(')')) throw CalcError("missing closing parenthesis");
      return value;
    }
    if (eat('-')) return -factor();
    if (eat('+')) return factor();
    return number();
  }

  double number() {
    skip_ws();
    const std::size_t start = pos;
    while (pos < src.size() &&
           (std::isdigit(static_cast<unsigned char>(src[pos])) || src[pos] == '.'))
      ++pos;
    if (pos == start) throw CalcError("expected a number at position " + std::to_string(start));
    double value = 0.0;
    const auto [ptr, ec] = std::from_chars(src.data() + start, src.data() + pos, value);
    if (ec != std::errc{} || ptr != src.data() + pos)
      throw CalcError("bad number '" + src.substr(start, pos - start) + "'");
    return value;
  }
};

}  // namespace

double eval_arithmetic(const std::string& expression) {
  Parser parser{expression};
  const double value = parser.expression();
  parser.skip_ws();
  if (parser.pos != expression.size())
    throw CalcError("unexpected trailing input at position " + std::to_string(parser.pos));
  if (!std::isfinite(value)) throw CalcError("non-finite result");
  return value;
}

std::string format_number(double v) {
  if (std::abs(v) < 1e15 && v == std::floor(v)) {
    char buf[32];
    auto [ptr, ec] = std::to_chars(buf, buf + sizeof(buf), static_cast<long long>(v));
    return std::string(buf, ptr);
  }
  char buf[64];
  auto [ptr, ec] = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, ptr);
}

}  // namespace aqo
