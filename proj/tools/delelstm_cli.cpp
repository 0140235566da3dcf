#include <iostream>

#include "delelstm/cli.hpp"

int main(int argc, char** argv) { return delelstm::run_cli(argc, argv, std::cout, std::cerr); }
