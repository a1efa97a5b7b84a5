#pragma once

#include <cstdint>
#include <iosfwd>
#include <string>
#include <vector>

#include "espectra/types.hpp"

namespace espectra {

/// Process exit codes of the command-line tool.
enum ExitCode : int {
  kExitOk = 0,
  kExitThreshold = 1,  // a declared threshold failed; the report is still written
  kExitConfig = 2,
  kExitIo = 3,
  kExitNumerical = 4,
};

/// Runs the tool on `args` (without the program name) and returns the exit
/// code. Normal output goes to `out`, diagnostics to `err`.
int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

/// Parses "a+bi", "a-bi", "bi", "i", "a". Throws SpecError on anything else.
Complex parse_complex(const std::string& text);

/// Parses a decimal unsigned 64-bit integer. Throws SpecError otherwise.
std::uint64_t parse_seed(const std::string& text);

/// Comma-separated reals, e.g. "0.5,0.7".
std::vector<double> parse_real_list(const std::string& text);

}  // namespace espectra
