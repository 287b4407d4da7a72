#include <iostream>

#include "scenario_rag/cli.hpp"

int main(int argc, char** argv) {
  return scenario_rag::cli::run(argc, argv, std::cout, std::cerr);
}
