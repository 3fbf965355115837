#ifndef KOLSIM_CLI_HPP
#define KOLSIM_CLI_HPP

namespace kolsim {

// Command-line front end: simulate | invasion | classify | audit, driven by
// a strict-schema JSON config.  Exit codes: 0 success, 2 config error,
// 3 numerical abort, 4 inconclusive classification under --strict.
int cli_run(int argc, const char* const* argv);

}  // namespace kolsim

#endif
