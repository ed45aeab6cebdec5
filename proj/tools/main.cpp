#include <iostream>
#include <string>
#include <vector>

#include "ckprobe/cli.hpp"

int main(int argc, char** argv) {
  std::vector<std::string> args(argv + 1, argv + argc);
  return ckprobe::execute_command(args, std::cout, std::cerr);
}
