#pragma once

namespace cugro {

/// Full command-line entry point; returns the process exit code
/// (0 ok, 2 config error, 3 data error, 4 numeric divergence).
int cli_main(int argc, const char* const* argv);

}  // namespace cugro
