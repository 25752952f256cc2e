/* Naive trailing-space trimmer, the demo target for the repair pipeline. */

#include "trim.h"

int trim_trailing(char *buf, int len)
{
    while (buf[len - 1] == 0x20) {
        len--;
    }
    buf[len] = '\0';
    return len;
}
