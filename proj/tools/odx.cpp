#include <iostream>

#include "odx/cli.hpp"

int main(int argc, char** argv) { return odx::run_cli(argc, argv, std::cout, std::cerr); }
