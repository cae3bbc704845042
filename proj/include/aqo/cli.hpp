#pragma once

#include <iosfwd>
#include <string>
#include <vector>

#include "aqo/harness.hpp"

namespace aqo::cli {

// Exit codes: 0 success, 1 runtime failure, 2 unknown command / bad usage,
// 3 config validation failure.
int run_command(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

enum class ReportFormat { Json, Table };

// Atomic write (temp + rename). JSON output round-trips to an equal report.
void write_report(const harness::EvalReport& report, const std::string& path,
                  ReportFormat format);

std::string usage();

}  // namespace aqo::cli
