// expect: CR-OWN-LEAK 8:3
#include <stdlib.h>

int f(void) {
  char *p = (char *) malloc(16U);
  if (p == NULL)
    return 1;
  return 0;
}
