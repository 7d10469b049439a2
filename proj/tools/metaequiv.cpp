#include <iostream>
#include <string>
#include <vector>

#include "metaeq/cli.hpp"

int main(int argc, char** argv) {
  std::vector<std::string> args(argv, argv + argc);
  return metaeq::cli::run(args, std::cout, std::cerr);
}
