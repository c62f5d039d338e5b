#include <iostream>
#include <string>
#include <vector>

#include "deconfound_cli/cli.hpp"

int main(int argc, char** argv) {
  return deconfound::cli::run(std::vector<std::string>(argv, argv + argc), std::cout, std::cerr);
}
