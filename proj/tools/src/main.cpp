#include <iostream>

#include "mveq_cli/commands.hpp"

int main(int argc, char** argv) {
  return mveq::cli::main_entry(argc, argv, std::cout, std::cerr);
}
