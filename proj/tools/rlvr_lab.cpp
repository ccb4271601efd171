#include <iostream>

#include "rlvr/cli.hpp"

int main(int argc, char** argv) { return rlvr::run_cli(argc, argv, std::cout, std::cerr); }
