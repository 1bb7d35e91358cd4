#include <iostream>
#include <string>
#include <vector>

#include "gebm/cli/lab.hpp"

int main(int argc, char** argv) {
  std::vector<std::string> args(argv, argv + argc);
  return gebm::cli::run(args, std::cout, std::cerr);
}
