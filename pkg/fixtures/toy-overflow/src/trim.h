#ifndef TRIM_H
#define TRIM_H

/* Remove trailing ASCII spaces from buf in place; returns the new length.
 * buf holds len bytes and need not be NUL-terminated on entry; on return
 * it is NUL-terminated at the new length. */
int trim_trailing(char *buf, int len);

#endif
