#include <iostream>

#include "gossipgrid/cli.hpp"

int main(int argc, char** argv) {
  return gossipgrid::run_cli(argc, argv, std::cout, std::cerr);
}
