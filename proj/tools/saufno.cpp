#include <iostream>

#include "saufno/eval/cli.hpp"
#include "saufno/tensor/tensor.hpp"

int main(int argc, char** argv) {
  saufno::tune_allocator();
  return saufno::eval::run_cli(argc, argv, std::cout, std::cerr);
}
