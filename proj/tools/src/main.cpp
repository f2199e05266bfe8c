#include "oat/cli.hpp"

#include <iostream>

int main(int argc, char** argv) { return oat::run_cli(argc, argv, std::cout, std::cerr); }
