#include <iostream>

#include "crg/cli.hpp"

int main(int argc, char** argv) { return crg::cli::main(argc, argv, std::cout, std::cerr); }
