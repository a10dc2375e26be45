#include <cstdio>

int main() {
  std::puts("frea: command-line interface not wired yet");
  return 1;
}
