#include "mmsr/cli.hpp"

int main(int argc, char** argv) { return mmsr::cli::cli_main(argc, argv); }
