#ifndef HEADER_H
#define HEADER_H

/* Maximum of two ints. */
#define MAX(a, b) ((a) > (b) ? (a) : (b))

int clamp_sum(int *xs, int n, int lo, int hi);

#endif
