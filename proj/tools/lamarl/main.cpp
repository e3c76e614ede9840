#include "lamarl/cli/commands.hpp"

#include <iostream>

int main(int argc, char** argv) { return lamarl::cli::run_cli(argc, argv, std::cout, std::cerr); }
