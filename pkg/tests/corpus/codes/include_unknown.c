// expect: CR-INCLUDE-UNKNOWN 2:1
#include <sys/socket.h>

int f(void) {
  return 0;
}
