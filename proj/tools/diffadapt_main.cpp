#include "diffadapt/cli.hpp"

int main(int argc, char** argv) { return diffadapt::cli::run_command(argc, argv); }
