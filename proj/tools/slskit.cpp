#include <sls/cli.hpp>

int main(int argc, char** argv) {
  return sls::cli::run({argv + 1, argv + argc});
}
