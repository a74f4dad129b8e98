#include <iostream>
#include <string>
#include <vector>

#include "dispatch/cli.hpp"

int main(int argc, char** argv) {
  std::vector<std::string> args(argv, argv + argc);
  return dispatch::cli::run(args, std::cout, std::cerr);
}
