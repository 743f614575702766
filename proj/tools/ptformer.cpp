#include <iostream>

#include "gnnformer/cli.hpp"

int main(int argc, char** argv) { return gnnformer::cli::run(argc, argv, std::cout, std::cerr); }
