#pragma once

#include <stdexcept>
#include <string>

namespace aqo {

class CalcError : public std::runtime_error {
public:
  using std::runtime_error::runtime_error;
};

// Evaluates + - * / with parentheses and unary minus over decimal literals.
double eval_arithmetic(const std::string& expression);

// Integers print without a decimal point; everything else uses the shortest
// round-trip form.
std::string format_number(double v);

}  // namespace aqo
