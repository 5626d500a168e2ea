#include <iostream>

#include "scanvar/cli.hpp"

int main(int argc, char** argv) { return scanvar::run_cli(argc, argv, std::cout, std::cerr); }
