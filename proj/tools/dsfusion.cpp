#include "dsf/cli.hpp"

#include <iostream>

int main(int argc, char** argv) { return dsf::cmd_run(argc, argv, std::cout, std::cerr); }
