#include "nstab/cli.hpp"

int main(int argc, char** argv) { return nstab::cli::run(argc, argv); }
