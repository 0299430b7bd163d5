#pragma once

#include <ostream>
#include <string>
#include <vector>

namespace dyntrack {

/// Runs one subcommand: synth, identify, track, estimate, martin, recognize, eval.
/// `args` excludes the program name. Failures print one JSON line to `err`:
///   {"error": "<message>", "file": "<path>", "offset": <byte>}
/// (file and offset only for malformed input) and return nonzero.
int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace dyntrack
