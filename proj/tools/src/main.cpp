#include <iostream>

#include "fdq/cli/commands.hpp"

int main(int argc, char** argv) {
  std::vector<std::string> args(argv + 1, argv + argc);
  return fdq::cli::run(args, std::cout, std::cerr);
}
