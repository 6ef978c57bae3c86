#include <iostream>

#include "perturb/cli.hpp"

int main(int argc, char** argv) { return perturb::cli::run(argc, argv, std::cout, std::cerr); }
