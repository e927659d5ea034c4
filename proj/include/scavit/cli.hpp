#pragma once

namespace scavit {

/// Entry point behind the `scavit` executable. Subcommands: gen-data, train,
/// eval, roc, gradcheck. Returns 0 on success, 2 on bad usage and 1 on
/// runtime failure.
int cli_main(int argc, const char* const* argv);

}  // namespace scavit
