#include <iostream>

#include "tscm/cli.hpp"

int main(int argc, char** argv) { return tscm::cli::run(argc, argv, std::cout, std::cerr); }
