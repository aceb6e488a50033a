#include <iostream>

#include "ipd_cli.hpp"

int main(int argc, char** argv) { return ipd::cli::run(argc, argv, std::cout, std::cerr); }
