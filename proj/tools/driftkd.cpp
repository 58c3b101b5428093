#include <iostream>

#include "driftkd/cli.hpp"

int main(int argc, char** argv) { return driftkd::cli::run(argc, argv, std::cout, std::cerr); }
