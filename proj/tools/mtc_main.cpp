#include <vector>

#include "mtc/cli.hpp"

int main(int argc, char** argv) {
  return mtc::run_cli(std::vector<std::string>(argv + 1, argv + argc));
}
