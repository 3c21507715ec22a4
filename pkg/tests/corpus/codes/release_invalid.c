// expect: CR-RELEASE-INVALID 5:8
#include <stdlib.h>

void f(int *p) {
  free(p);
}
