#pragma once

#include <string>
#include <vector>

namespace rotot {

// Command line front end: fit / predict / diagnose / simulate. Returns the
// process exit code: 0 success, 1 usage, 2 malformed file, 3 shape mismatch,
// 4 fit failure. All subcommands are deterministic under a fixed seed.
int run_cli(int argc, const char* const* argv);

// Same entry point for in-process tests; args exclude the program name.
int run_cli(const std::vector<std::string>& args);

}  // namespace rotot
