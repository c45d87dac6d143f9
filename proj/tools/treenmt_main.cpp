#include <cstdio>

int main() {
  std::puts("treenmt: CLI wiring pending");
  return 0;
}
