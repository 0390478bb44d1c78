#include <iostream>

#include "rmsnet/cli.hpp"

int main(int argc, char** argv) { return rmsnet::run_cli(argc, argv, std::cout, std::cerr); }
