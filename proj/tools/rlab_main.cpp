#include <vector>

#include "rewriter/cli.hpp"

int main(int argc, char** argv) {
  std::vector<std::string> args(argv + 1, argv + argc);
  return rewriter::run_cli(args);
}
