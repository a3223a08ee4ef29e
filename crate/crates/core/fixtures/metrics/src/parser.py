"""Tiny key=value parser.

if this docstring had code, it would not count.
"""


def parse(line, strict=False):
    # strip comments first
    line = line.split("#")[0].strip()
    if not line:
        return None
    elif "=" not in line and strict:
        raise ValueError('missing "="')
    key, _, value = line.partition("=")
    try:
        number = int(value)
    except ValueError:
        number = None
    return key.strip(), number or value.strip()
