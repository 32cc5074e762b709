#include "dlc/cli.hpp"

#include <iostream>

int main(int argc, char** argv) { return dlc::cli::run(argc, argv, std::cout, std::cerr); }
