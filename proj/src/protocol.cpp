#include "aqo/protocol.hpp"

#include <stdexcept>

namespace aqo {

Protocol protocol_from_string(const std::string& s) {
  if (s == "cot") return Protocol::Cot;
  if (s == "debate") return Protocol::Debate;
  if (s == "self_consistency") return Protocol::SelfConsistency;
  if (s == "self_refine") return Protocol::SelfRefine;
  if (s == "ensemble") return Protocol::Ensemble;
  if (s == "testing") return Protocol::Testing;
  if (s == "react") return Protocol::React;
  throw std::runtime_error("unknown protocol: " + s);
}

std::string to_string(Protocol p) {
  switch (p) {
    case Protocol::Cot: return "cot";
    case Protocol::Debate: return "debate";
    case Protocol::SelfConsistency: return "self_consistency";
    case Protocol::SelfRefine: return "self_refine";
    case Protocol::Ensemble: return "ensemble";
    case Protocol::Testing: return "testing";
    case Protocol::React: return "react";
  }
  throw std::runtime_error("unknown protocol enum value");
}

}  // namespace aqo
