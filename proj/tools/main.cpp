#include <iostream>
#include <string>
#include <vector>

#include "tvest/cli.hpp"

int main(int argc, char** argv) {
  std::vector<std::string> args(argv + 1, argv + argc);
  return tvest::run_cli(std::move(args), std::cout, std::cerr);
}
