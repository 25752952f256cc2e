int trim_trailing(char *buf, int len)
{
    while (len > 0 && buf[len - 1] == 0x20) {
        len--;
    }
    buf[len] = '\0';
    return len;
}
