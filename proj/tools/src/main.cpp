#include <iostream>
#include <string>
#include <vector>

#include "commands.hpp"

int main(int argc, char** argv) {
  return layersim::cli::run(std::vector<std::string>(argv, argv + argc), std::cout, std::cerr);
}
