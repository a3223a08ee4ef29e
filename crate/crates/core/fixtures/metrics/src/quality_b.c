#include <string.h>

/*
 * Classify a character.
 * Returns: 0 space, 1 digit, 2 other
 */
static int classify(char c) {
    switch (c) {
    case ' ':
    case '\t':
        return 0;
    default:
        return (c >= '0' && c <= '9') ? 1 : 2;
    }
}

int count_digits(const char *s) {
    int n = 0;
    while (*s) {
        n += classify(*s++) == 1;
    }
    return n;
}
