#include <iostream>

#include "ts3/cli.hpp"

int main(int argc, char** argv) { return ts3::run_cli(argc, argv, std::cout, std::cerr); }
