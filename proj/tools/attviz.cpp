#include <iostream>

#include "attviz/cli.hpp"

int main(int argc, char** argv) { return attviz::cli::run(argc, argv, std::cout, std::cerr); }
