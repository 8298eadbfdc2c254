#include <iostream>

#include "qoracle/cli.hpp"

int main(int argc, char** argv) { return qoracle::cli_main(argc, argv, std::cout, std::cerr); }
