#include "gss/cli.hpp"

int main(int argc, char** argv) { return gss::cli::run_cli(argc, argv); }
