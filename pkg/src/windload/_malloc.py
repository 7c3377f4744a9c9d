"""glibc allocator tuning for large-array churn.

The training loop allocates and frees tens of multi-megabyte arrays per
step. With glibc defaults those come from mmap, so every step pays munmap
plus kernel page zeroing; keeping them on the heap cuts step time several
fold on small machines. No effect on results, only on speed; silently a
no-op on non-glibc platforms.
"""

from __future__ import annotations

import ctypes

_M_TRIM_THRESHOLD = -1
_M_MMAP_MAX = -4

_done = False


def tune_allocator() -> bool:
    global _done
    if _done:
        return True
    try:
        libc = ctypes.CDLL("libc.so.6")
        libc.mallopt(_M_MMAP_MAX, 0)
        libc.mallopt(_M_TRIM_THRESHOLD, 1 << 30)
        _done = True
    except (OSError, AttributeError):
        return False
    return True
