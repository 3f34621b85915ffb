#include <iostream>

#include "neurallog/cli.hpp"

int main(int argc, char** argv) { return neurallog::cli::run(argc, argv, std::cerr); }
