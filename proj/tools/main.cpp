#include <iostream>
#include <vector>

#include "tubempc/cli.hpp"

int main(int argc, char** argv) {
  std::vector<std::string> args(argv + 1, argv + argc);
  return tubempc::run_cli(args, std::cout, std::cerr);
}
