#include <iostream>

#include "mftp/commands.hpp"

int main(int argc, char** argv) { return mftp::cli::run_cli(argc, argv, std::cout, std::cerr); }
