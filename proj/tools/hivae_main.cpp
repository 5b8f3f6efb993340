#include <iostream>

#include "hivae/cli.hpp"

int main(int argc, char** argv) {
  return hivae::run_cli({argv, argv + argc}, std::cout, std::cerr);
}
