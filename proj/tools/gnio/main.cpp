#include <iostream>

#include "gnio/cli/app.hpp"

int main(int argc, char** argv) {
  return gnio::cli::run({argv + 1, argv + argc}, std::cout, std::cerr);
}
