#include <iostream>

#include "oddr/cli.hpp"

int main(int argc, char** argv) { return oddr::cli::main(argc, argv, std::cout, std::cerr); }
