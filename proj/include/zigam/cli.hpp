#pragma once

namespace zigam {

// Entry point of the `zigam` command-line tool. Returns the process exit
// code; failures print a JSON error report on stderr.
int run_cli(int argc, char** argv);

}  // namespace zigam
