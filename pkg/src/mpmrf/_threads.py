import os
from contextlib import contextmanager

# Numba sizes its pool at import; allow at least 8 workers so thread-count
# requests behave the same on small machines.
os.environ.setdefault("NUMBA_NUM_THREADS", str(max(8, os.cpu_count() or 1)))
# The bundled TBB is often too old; OpenMP is present wherever numba wheels run.
os.environ.setdefault("NUMBA_THREADING_LAYER", "omp")

import numba  # noqa: E402


def max_threads() -> int:
    return numba.config.NUMBA_NUM_THREADS


def set_threads(n: int) -> None:
    if not 1 <= n <= max_threads():
        raise ValueError(f"thread count must be in [1, {max_threads()}], got {n}")
    numba.set_num_threads(n)


def get_threads() -> int:
    return numba.get_num_threads()


@contextmanager
def threads(n: int):
    prev = get_threads()
    set_threads(n)
    try:
        yield
    finally:
        numba.set_num_threads(prev)
