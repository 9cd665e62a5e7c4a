#include <iostream>

#include "exnorm/cli.hpp"

int main(int argc, char** argv) { return exnorm::run_cli(argc, argv, std::cout, std::cerr); }
