#pragma once

#include <string>

namespace aqo {

// Collaboration protocols an operator can run.
enum class Protocol {
  Cot,
  Debate,
  SelfConsistency,
  SelfRefine,
  Ensemble,
  Testing,
  React,
};

Protocol protocol_from_string(const std::string& s);
std::string to_string(Protocol p);

}  // namespace aqo
