#include <iostream>
#include <string>
#include <vector>

#include "mhub/cli.hpp"

int main(int argc, char** argv) {
  std::vector<std::string> args(argv, argv + argc);
  return mhub::cli::run(args, std::cout, std::cerr);
}
