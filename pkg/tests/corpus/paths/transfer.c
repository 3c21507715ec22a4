#include <stdlib.h>
#include <crusted.h>

void sink(char * e_hown s);

char * e_opt(NULL) e_hown make(unsigned n) {
  char *p = (char *) malloc(n);
  char *q = p;
  if (q == NULL)
    return NULL;
  sink(p);
  return q;
}
