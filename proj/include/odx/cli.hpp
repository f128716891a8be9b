#pragma once

#include <iosfwd>
#include <string>
#include <vector>

namespace odx {

inline constexpr const char* kVersion = "0.1.0";

// Runs one `odx` invocation. Results go to `out`; failures print a single
// `error: code=E_X message=...` line to `err` and return nonzero.
int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);
int run_cli(int argc, const char* const* argv, std::ostream& out, std::ostream& err);

}  // namespace odx
