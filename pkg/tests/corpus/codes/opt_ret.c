// expect: CR-OPT-RET 6:10
#include <fcntl.h>
#include <crusted.h>

fd_own_t f(const char *path) {
  return open(path, O_RDONLY);
}
