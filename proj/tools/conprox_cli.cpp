#include "conprox/harness.hpp"

int main(int argc, char** argv) {
  std::vector<std::string> args(argv + 1, argv + argc);
  return conprox::harness::cli_main(args);
}
