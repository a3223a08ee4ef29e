/* Clamp and sum helpers. */
#include <stdio.h>

int clamp_sum(int *xs, int n, int lo, int hi) {
    int total = 0;
    for (int i = 0; i < n; i++) {
        if (xs[i] < lo) {
            total += lo;
        } else if (xs[i] > hi && hi > 0) {
            total += hi;
        } else {
            total += xs[i];
        }
    }
    // a comment mentioning if and while never counts
    if (total > 100) {
        printf("big: %d if\n", total);
    }
    return total;
}
