#include <iostream>

#include "trace/cli.h"

int main(int argc, char** argv) { return trace::cli_main(argc, argv, std::cout, std::cerr); }
