#include <iostream>

#include "semfx/cli.hpp"

int main(int argc, char** argv) { return semfx::run_cli(argc, argv, std::cout, std::cerr); }
