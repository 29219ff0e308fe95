#include <iostream>

#include "lightattack/cli.hpp"

int main(int argc, char** argv) {
  return lightattack::run_cli(std::vector<std::string>(argv + 1, argv + argc), std::cout, std::cerr);
}
