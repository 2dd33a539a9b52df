// Acceptance suite: one pass/fail line per criterion. Placeholder main while
// the training criteria are wired up.
#include <cstdio>
int main() {
  std::printf("acceptance: not yet implemented\n");
  return 1;
}
