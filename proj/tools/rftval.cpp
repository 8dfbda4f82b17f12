#include <iostream>

#include "rftval/cli.hpp"

int main(int argc, char** argv) { return rftval::run_cli(argc, argv, std::cout, std::cerr); }
