#include <iostream>

#include "agsd/cli.hpp"

int main(int argc, char** argv) { return agsd::run_cli(argc, argv, std::cout, std::cerr); }
