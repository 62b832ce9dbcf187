#include <iostream>

#include "jdr/commands.hpp"

int main(int argc, char** argv) { return jdr::run_cli(argc, argv, std::cout, std::cerr); }
