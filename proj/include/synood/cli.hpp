#pragma once

namespace synood {

// Entry point of the `synood` command-line tool, exposed from the library so
// tests can drive the CLI in-process. Exit codes: 0 success, 2 usage or
// configuration errors, 3 runtime/model errors.
int cli_main(int argc, char** argv);

}  // namespace synood
