#define DOCTEST_CONFIG_IMPLEMENT
#include <doctest.h>

#include "nart/common.hpp"

int main(int argc, char** argv) {
  // Tests always run with the expensive invariant scans on.
  nart::set_debug_checks(true);
  doctest::Context ctx;
  ctx.applyCommandLine(argc, argv);
  return ctx.run();
}
