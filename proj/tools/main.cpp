#include <iostream>

#include "inbed/cli.hpp"

int main(int argc, char** argv) { return inbed::cli_main(argc, argv, std::cout, std::cerr); }
