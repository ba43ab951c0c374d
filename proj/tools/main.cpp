#include <iostream>

#include "cli.hpp"

int main(int argc, char** argv) { return qmeas::cli::run(argc, argv, std::cout, std::cerr); }
