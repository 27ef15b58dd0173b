#include <stdio.h>

struct point {
  int x, y;
};

static int dot(const struct point *a, const struct point *b) {
  return a->x * b->x + a->y * b->y;
}

int main(void) {
  struct point p = {3, 4};
  printf("%d\n", dot(&p, &p));
  return 0;
}
