#include "kolsim/cli.hpp"

int main(int argc, char** argv) { return kolsim::cli_run(argc, argv); }
