#include "sonargen/cli.hpp"

int main(int argc, char** argv) {
  return sonargen::cli::run(std::vector<std::string>(argv + 1, argv + argc));
}
