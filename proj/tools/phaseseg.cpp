#include "phaseseg/cli/cli.hpp"

#include <iostream>

int main(int argc, char** argv) { return phaseseg::cli::run(argc, argv, std::cout, std::cerr); }
