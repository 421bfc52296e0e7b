#include <cstdio>

int main(int argc, char** argv) {
  (void)argc;
  (void)argv;
  std::fprintf(stderr, "eqfree: command-line driver not wired up yet\n");
  return 2;
}
