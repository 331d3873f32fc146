#include <vector>
#include <string>

#include "hifi/cli.hpp"

int main(int argc, char** argv) {
  std::vector<std::string> args(argv + 1, argv + argc);
  return hifi::cli::run(args);
}
