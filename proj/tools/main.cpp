#include "fewner/cli.hpp"

int main(int argc, char** argv) {
  return fewner::cli::dispatch({argv + 1, argv + argc});
}
