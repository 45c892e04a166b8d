#include <iostream>

#include "ssin/cli.hpp"

int main(int argc, char** argv) { return ssin::cli::run(argc, argv, std::cout, std::cerr); }
