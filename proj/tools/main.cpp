#include <iostream>

#include "resad/cli.hpp"

int main(int argc, char** argv) { return resad::cli_dispatch(argc, argv, std::cout, std::cerr); }
