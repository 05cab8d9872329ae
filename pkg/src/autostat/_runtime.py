"""Process-level performance settings applied by the command-line entry point."""

import ctypes
import ctypes.util
import sys

_M_TRIM_THRESHOLD = -1
_M_TOP_PAD = -2
_M_MMAP_THRESHOLD = -3


def tune_allocator() -> bool:
    """Keep glibc from returning large numpy temporaries to the OS.

    Gram-sized temporaries (a few hundred KB) otherwise go through mmap and
    are page-faulted in on every allocation, which roughly doubles the cost
    of a likelihood evaluation.  Returns True when the settings were applied.
    """
    if not sys.platform.startswith("linux"):
        return False
    try:
        libc = ctypes.CDLL(ctypes.util.find_library("c") or "libc.so.6")
        ok = libc.mallopt(_M_MMAP_THRESHOLD, 32 * 1024 * 1024)
        ok &= libc.mallopt(_M_TRIM_THRESHOLD, 256 * 1024 * 1024)
        ok &= libc.mallopt(_M_TOP_PAD, 64 * 1024 * 1024)
    except (OSError, AttributeError):
        return False
    return bool(ok)
