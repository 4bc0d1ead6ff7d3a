#include <iostream>

#include "kronmark_cli/commands.hpp"

int main(int argc, char** argv) { return kronmark::cli::run(argc, argv, std::cout, std::cerr); }
