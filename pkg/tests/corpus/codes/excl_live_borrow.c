// expect: CR-EXCL-VIOLATION 6:11
int f(void) {
  int x = 1;
  int *p = &x;
  *p = 2;
  int y = x;
  *p = 3;
  return y;
}
