#include <iostream>

#include "pmesh/pipeline.hpp"

int main(int argc, char** argv) { return pmesh::run_cli(argc, argv, std::cout, std::cerr); }
