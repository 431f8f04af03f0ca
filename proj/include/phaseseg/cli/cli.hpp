#pragma once

#include <ostream>

namespace phaseseg::cli {

/// Entry point of the `phaseseg` tool. Results go to `out` (JSON with
/// --json), diagnostics to `err`. Failures print one line
/// `error: <kind>: <message>` and return nonzero.
int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err);

inline constexpr const char* kOutputRootEnv = "PHASESEG_OUTPUT_ROOT";

}  // namespace phaseseg::cli
