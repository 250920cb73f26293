#include <iostream>
#include <string>
#include <vector>

#include "weiper/cli.hpp"

int main(int argc, char** argv) {
  std::vector<std::string> args(argv, argv + argc);
  return weiper::cli::dispatch(args, std::cout, std::cerr);
}
