#include <iostream>
#include <string>
#include <vector>

#include "ihmpc/cli.hpp"

int main(int argc, char** argv) {
  std::vector<std::string> args(argv + 1, argv + argc);
  return ihmpc::run_command(args, std::cout, std::cerr);
}
