#include <iostream>
#include <string>
#include <vector>

#include "streamsim_cli/commands.hpp"

int main(int argc, char** argv) {
  std::vector<std::string> args(argv + 1, argv + argc);
  return streamsim::cli::run_cli(args, std::cout, std::cerr);
}
