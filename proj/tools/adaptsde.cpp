#include <iostream>

#include "adaptsde/cli.hpp"

int main(int argc, char** argv) { return adaptsde::run_cli(argc, argv, std::cout, std::cerr); }
